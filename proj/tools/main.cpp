#include "geomot/cli_app.hpp"

int main(int argc, char** argv) { return geomot::cli::run(argc, argv); }

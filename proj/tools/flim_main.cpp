#include "flim/cli.hpp"

int main(int argc, char** argv) { return flim::cli::run(argc, argv); }

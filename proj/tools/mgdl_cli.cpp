#include "mgdl/cli.hpp"

int main(int argc, char** argv) { return mgdl::cli::run(argc, argv); }

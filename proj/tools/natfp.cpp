#include "cli.hpp"

int main(int argc, char** argv) { return natfp::cli::run(argc, argv); }

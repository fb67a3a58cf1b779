#include "cli.hpp"

int main(int argc, char** argv) { return fusionsam::cli::run(argc, argv); }

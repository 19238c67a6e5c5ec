#include "tidegraph/cli.hpp"

int main(int argc, char** argv) { return tidegraph::cli::run(argc, argv); }

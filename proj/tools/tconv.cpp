#include "tconv/cli.hpp"

int main(int argc, char** argv) { return tconv::cli::run(argc, argv); }

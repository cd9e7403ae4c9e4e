#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) { return medfuzz::cli::run(argc, argv, std::cout); }

#include <iostream>

#include "lane3d/cli.hpp"

int main(int argc, char** argv) { return lane3d::cli::run(argc, argv, std::cout, std::cerr); }

#include "cli.hpp"

int main(int argc, char** argv) { return uaopose::cli::run(argc, argv); }

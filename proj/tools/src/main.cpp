#include "sqdiff_cli/app.hpp"

int main(int argc, char** argv) { return sqdiff::cli::main_entry(argc, argv); }

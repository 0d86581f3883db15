#include "commands.hpp"

int main(int argc, char** argv) { return mcdrive::cli::dispatch(argc, argv); }

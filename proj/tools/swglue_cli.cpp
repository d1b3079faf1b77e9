// Batch experiment runner; subcommands are filled in as the library grows.
#include <swglue/common.hpp>
#include <cstdio>

int main(int argc, char** argv) {
    (void)argc;
    (void)argv;
    std::printf("%s\n", swglue::kVersionString);
    return 64;
}

#include <cstdio>
#include <cstdlib>
#include <string>

#include "bsdelab/lab.hpp"

int main(int argc, char** argv) {
    const std::string selector = argc > 1 ? argv[1] : "all";
    const std::uint64_t seed = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 1;
    const auto rows = bsdelab::lab::check_suite(selector, seed);
    int failed = 0;
    for (const auto& r : rows) {
        std::printf("%s %s: %s measured=%.6g threshold=%.6g | %s\n", r.pass ? "PASS" : "FAIL", r.id.c_str(),
                    r.name.c_str(), r.measured, r.threshold, r.detail.c_str());
        failed += !r.pass;
    }
    std::printf("%zu criteria, %d failed\n", rows.size(), failed);
    return failed == 0 ? 0 : 1;
}

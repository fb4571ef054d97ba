#pragma once

// Randomized property suites shared by the doctest runner and the acceptance
// binary.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gridwatch/gim.hpp"
#include "gridwatch/rules.hpp"

namespace props {

struct SuiteResult {
    std::string name;
    std::size_t cases = 0;
    std::size_t failures = 0;
    std::string first_failure;

    bool passed() const { return failures == 0; }
    void fail(const std::string& what) {
        if (failures++ == 0) first_failure = what;
    }
};

struct Context {
    gridwatch::gim::Gim model;
    gridwatch::rules::SpecificationBase sb;
    std::uint64_t seed = 20220414;
    std::size_t cases = 1000;
};

SuiteResult codec_round_trip(const Context& ctx);
SuiteResult codec_fuzz(const Context& ctx);
SuiteResult automata_totality(const Context& ctx);
SuiteResult conformant_traces(const Context& ctx);
SuiteResult startdt_deletion(const Context& ctx);
SuiteResult sequence_wraparound(const Context& ctx);
SuiteResult rule_determinism(const Context& ctx);
SuiteResult idempotent_replay(const Context& ctx);
SuiteResult order_insensitivity(const Context& ctx);
SuiteResult closed_world(const Context& ctx);

std::vector<SuiteResult> run_all(const Context& ctx);

} // namespace props

#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "gridwatch/engine.hpp"
#include "gridwatch/gim.hpp"
#include "gridwatch/rules.hpp"

namespace testing {

inline std::string fixture(const std::string& name) { return std::string(GRIDWATCH_FIXTURES) + "/" + name; }
inline std::string data_file(const std::string& name) { return std::string(GRIDWATCH_TEST_DATA) + "/" + name; }

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline gridwatch::gim::Gim testbed_model() { return gridwatch::gim::load_model_file(fixture("testbed_gim.json")); }

inline gridwatch::rules::SpecificationBase testbed_rules() {
    return gridwatch::rules::generate_rules(testbed_model(),
                                            gridwatch::rules::load_config_file(fixture("rule_config.json")));
}

inline gridwatch::Bytes hex(const std::string& text) {
    gridwatch::Bytes out;
    std::istringstream in(text);
    std::string tok;
    while (in >> tok) out.push_back(static_cast<std::uint8_t>(std::stoul(tok, nullptr, 16)));
    return out;
}

} // namespace testing

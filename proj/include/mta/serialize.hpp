#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mta/errors.hpp"
#include "mta/tensor.hpp"

namespace mta {

using ordered_json = nlohmann::ordered_json;

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline std::string hash_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[h & 0xF];
        h >>= 4;
    }
    return out;
}

inline ordered_json tensor_to_json(const Tensor& t) {
    ordered_json j;
    j["shape"] = t.shape();
    j["data"] = t.data();
    return j;
}

inline Tensor tensor_from_json(const ordered_json& j, const std::string& field) {
    if (!j.is_object() || !j.contains("shape") || !j.contains("data"))
        throw ModelIoError("tensor '" + field + "' is malformed");
    try {
        auto shape = j.at("shape").get<std::vector<std::size_t>>();
        auto data = j.at("data").get<std::vector<double>>();
        return Tensor(std::move(shape), std::move(data));
    } catch (const DimensionError& e) {
        throw ModelIoError("tensor '" + field + "': " + e.what());
    } catch (const ordered_json::exception& e) {
        throw ModelIoError("tensor '" + field + "': " + e.what());
    }
}

inline void write_json_file(const std::string& file, const ordered_json& j) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw ModelIoError("cannot open '" + file + "' for writing");
    out << j.dump(1) << "\n";
    if (!out) throw ModelIoError("failed writing '" + file + "'");
}

inline ordered_json read_json_file(const std::string& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ModelIoError("cannot open '" + file + "'");
    try {
        return ordered_json::parse(in);
    } catch (const ordered_json::parse_error& e) {
        throw ModelIoError("'" + file + "' is not a valid model file: " + e.what());
    }
}

// Shared outer envelope for every trained artifact (sequence models and
// baselines alike); `variant` tells the loader which payload to expect.
inline ordered_json model_envelope(const std::string& variant) {
    ordered_json j;
    j["format"] = "mta-model";
    j["version"] = 1;
    j["variant"] = variant;
    return j;
}

inline void check_envelope(const ordered_json& j, const std::string& file) {
    if (!j.is_object() || j.value("format", std::string()) != "mta-model")
        throw ModelIoError("'" + file + "' is not a model file (missing format tag)");
    if (j.value("version", -1) != 1)
        throw ModelIoError("'" + file + "' has unsupported version " +
                           j.value("version", ordered_json()).dump());
    if (!j.contains("variant")) throw ModelIoError("'" + file + "' is missing the variant field");
}

} // namespace mta

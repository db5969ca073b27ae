#include "airway/volume.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace airway {

namespace {

using nlohmann::json;

std::filesystem::path raw_sibling(const std::filesystem::path& json_path) {
    std::filesystem::path p = json_path;
    p.replace_extension(".raw");
    return p;
}

void write_file(const std::filesystem::path& path, const void* data, std::size_t bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("cannot open: " + path.string());
    auto size = in.tellg();
    in.seekg(0);
    std::vector<char> buf(static_cast<std::size_t>(size));
    in.read(buf.data(), size);
    if (!in) throw std::runtime_error("read failed: " + path.string());
    return buf;
}

static_assert(std::endian::native == std::endian::little,
              "raw volume files are little-endian; add byte swapping for this platform");

json load_header(const std::filesystem::path& json_path) {
    std::ifstream in(json_path);
    if (!in) throw std::runtime_error("cannot open: " + json_path.string());
    json hdr;
    try {
        in >> hdr;
    } catch (const json::exception& e) {
        throw std::runtime_error("bad volume header " + json_path.string() + ": " + e.what());
    }
    if (!hdr.contains("dims") || !hdr["dims"].is_array() || hdr["dims"].size() != 3)
        throw std::runtime_error("volume header: missing or invalid field 'dims'");
    if (!hdr.contains("dtype") || !hdr["dtype"].is_string())
        throw std::runtime_error("volume header: missing or invalid field 'dtype'");
    if (!hdr.contains("channels") || !hdr["channels"].is_number_integer())
        throw std::runtime_error("volume header: missing or invalid field 'channels'");
    return hdr;
}

}  // namespace

void save_volume(const Volume& vol, const std::filesystem::path& json_path, RawDtype dtype) {
    json hdr;
    hdr["dims"] = {vol.nx, vol.ny, vol.nz};
    hdr["dtype"] = dtype == RawDtype::f32 ? "f32" : "u8";
    hdr["channels"] = 1;
    std::ofstream out(json_path);
    if (!out) throw std::runtime_error("cannot open for writing: " + json_path.string());
    out << hdr.dump(2) << "\n";

    if (dtype == RawDtype::f32) {
        std::vector<float> raw(vol.data.begin(), vol.data.end());
        write_file(raw_sibling(json_path), raw.data(), raw.size() * sizeof(float));
    } else {
        std::vector<std::uint8_t> raw(vol.size());
        for (std::size_t i = 0; i < vol.size(); ++i)
            raw[i] = static_cast<std::uint8_t>(vol.data[i]);
        write_file(raw_sibling(json_path), raw.data(), raw.size());
    }
}

Volume load_volume(const std::filesystem::path& json_path) {
    json hdr = load_header(json_path);
    if (hdr["channels"].get<int>() != 1)
        throw std::runtime_error("volume header: expected channels == 1, use load_feature_volume");
    Volume vol(hdr["dims"][0].get<int>(), hdr["dims"][1].get<int>(), hdr["dims"][2].get<int>());
    if (vol.nx <= 0 || vol.ny <= 0 || vol.nz <= 0)
        throw std::runtime_error("volume header: non-positive dims");

    auto raw = read_file(raw_sibling(json_path));
    std::string dtype = hdr["dtype"].get<std::string>();
    if (dtype == "f32") {
        if (raw.size() != vol.size() * sizeof(float))
            throw std::runtime_error("raw size mismatch for " + json_path.string());
        const float* f = reinterpret_cast<const float*>(raw.data());
        for (std::size_t i = 0; i < vol.size(); ++i) vol.data[i] = f[i];
    } else if (dtype == "u8") {
        if (raw.size() != vol.size())
            throw std::runtime_error("raw size mismatch for " + json_path.string());
        for (std::size_t i = 0; i < vol.size(); ++i)
            vol.data[i] = static_cast<unsigned char>(raw[i]);
    } else {
        throw std::runtime_error("volume header: unknown dtype '" + dtype + "'");
    }
    return vol;
}

void save_feature_volume(const FeatureVolume& vol, const std::filesystem::path& json_path) {
    json hdr;
    hdr["dims"] = {vol.nx, vol.ny, vol.nz};
    hdr["dtype"] = "f32";
    hdr["channels"] = vol.channels;
    std::ofstream out(json_path);
    if (!out) throw std::runtime_error("cannot open for writing: " + json_path.string());
    out << hdr.dump(2) << "\n";
    write_file(raw_sibling(json_path), vol.data.data(), vol.data.size() * sizeof(float));
}

FeatureVolume load_feature_volume(const std::filesystem::path& json_path) {
    json hdr = load_header(json_path);
    if (hdr["dtype"].get<std::string>() != "f32")
        throw std::runtime_error("feature volume header: dtype must be f32");
    int channels = hdr["channels"].get<int>();
    if (channels < 1) throw std::runtime_error("feature volume header: channels must be >= 1");
    FeatureVolume vol(hdr["dims"][0].get<int>(), hdr["dims"][1].get<int>(),
                      hdr["dims"][2].get<int>(), channels);
    auto raw = read_file(raw_sibling(json_path));
    if (raw.size() != vol.data.size() * sizeof(float))
        throw std::runtime_error("raw size mismatch for " + json_path.string());
    std::memcpy(vol.data.data(), raw.data(), raw.size());
    return vol;
}

}  // namespace airway

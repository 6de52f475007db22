#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "dnc/binary_io.hpp"
#include "dnc/dataset.hpp"
#include "dnc/errors.hpp"

namespace dnc {

namespace fs = std::filesystem;

namespace {

constexpr std::array<char, 8> kBlobMagic = {'G', 'E', 'O', 'D', 'S', 'C', '0', '1'};

std::string format_double(double v) {
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return {buf.data(), end};
}

double parse_double(std::string_view s, std::size_t row, const char* field) {
    double v = 0.0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || end != s.data() + s.size() || !std::isfinite(v)) {
        throw FormatError("metadata row " + std::to_string(row) + ": bad " + field + " '" +
                          std::string(s) + "'");
    }
    return v;
}

}  // namespace

void GeoDataset::add(std::string id, UtmPoint p, std::span<const float> desc) {
    if (desc.size() != dim) {
        throw InvalidInput("descriptor has " + std::to_string(desc.size()) + " values, dataset dim is " +
                           std::to_string(dim));
    }
    ids.push_back(std::move(id));
    utm.push_back(p);
    descriptors.insert(descriptors.end(), desc.begin(), desc.end());
}

bool GeoDataset::normalized(double tol) const {
    for (std::size_t i = 0; i < size(); ++i) {
        double sq = 0.0;
        for (float v : descriptor(i)) sq += static_cast<double>(v) * v;
        if (std::abs(std::sqrt(sq) - 1.0) > tol) return false;
    }
    return true;
}

void GeoDataset::validate() const {
    if (utm.size() != ids.size() || descriptors.size() != ids.size() * dim) {
        throw InvalidInput("dataset storage is ragged");
    }
    std::unordered_set<std::string_view> seen;
    for (std::size_t i = 0; i < size(); ++i) {
        if (!seen.insert(ids[i]).second) throw InvalidInput("duplicate record id '" + ids[i] + "'");
        if (ids[i].find_first_of(",\r\n") != std::string::npos) {
            throw InvalidInput("record id '" + ids[i] + "' contains a separator character");
        }
        if (!std::isfinite(utm[i].easting) || !std::isfinite(utm[i].northing)) {
            throw InvalidInput("record " + std::to_string(i) + " has a non-finite coordinate");
        }
        for (float v : descriptor(i)) {
            if (!std::isfinite(v)) {
                throw InvalidInput("record " + std::to_string(i) + " has a non-finite descriptor value");
            }
        }
    }
}

GeoDataset GeoDataset::prefix(std::size_t n) const {
    GeoDataset out;
    out.dim = dim;
    n = std::min(n, size());
    out.ids.assign(ids.begin(), ids.begin() + n);
    out.utm.assign(utm.begin(), utm.begin() + n);
    out.descriptors.assign(descriptors.begin(), descriptors.begin() + n * dim);
    return out;
}

GeoDataset GeoDataset::subset(std::span<const std::size_t> rows) const {
    GeoDataset out;
    out.dim = dim;
    for (std::size_t r : rows) out.add(ids.at(r), utm.at(r), descriptor(r));
    return out;
}

void save_dataset(const GeoDataset& dataset, const fs::path& dir) {
    dataset.validate();
    if (dataset.size() > UINT32_MAX || dataset.dim > UINT32_MAX) {
        throw InvalidInput("dataset too large for the u32 blob header");
    }
    fs::create_directories(dir);

    std::ofstream meta(dir / kMetadataFile, std::ios::binary | std::ios::trunc);
    if (!meta) throw Error("cannot open " + (dir / kMetadataFile).string() + " for writing");
    meta << "id,easting,northing\n";
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        meta << dataset.ids[i] << ',' << format_double(dataset.utm[i].easting) << ','
             << format_double(dataset.utm[i].northing) << '\n';
    }
    if (!meta.flush()) throw Error("write failed: " + (dir / kMetadataFile).string());

    std::ofstream blob(dir / kDescriptorFile, std::ios::binary | std::ios::trunc);
    if (!blob) throw Error("cannot open " + (dir / kDescriptorFile).string() + " for writing");
    blob.write(kBlobMagic.data(), kBlobMagic.size());
    write_u32_le(blob, static_cast<std::uint32_t>(dataset.size()));
    write_u32_le(blob, static_cast<std::uint32_t>(dataset.dim));
    write_f32_le(blob, dataset.descriptors);
    if (!blob.flush()) throw Error("write failed: " + (dir / kDescriptorFile).string());
}

GeoDataset load_dataset(const fs::path& dir) {
    std::ifstream meta(dir / kMetadataFile, std::ios::binary);
    if (!meta) throw FormatError("cannot open " + (dir / kMetadataFile).string());
    std::ifstream blob(dir / kDescriptorFile, std::ios::binary);
    if (!blob) throw FormatError("cannot open " + (dir / kDescriptorFile).string());

    std::array<char, 8> magic{};
    blob.read(magic.data(), magic.size());
    if (!blob || magic != kBlobMagic) {
        throw FormatError("descriptor blob: bad magic or version (expected GEODSC01)");
    }
    const std::uint32_t count = read_u32_le(blob);
    const std::uint32_t dim = read_u32_le(blob);
    if (!blob) throw FormatError("descriptor blob: truncated header");

    GeoDataset ds;
    ds.dim = dim;

    std::string line;
    if (!std::getline(meta, line)) throw FormatError("metadata: missing header row");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "id,easting,northing") {
        throw FormatError("metadata: header must be 'id,easting,northing', got '" + line + "'");
    }
    std::unordered_set<std::string> seen;
    while (std::getline(meta, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::size_t row = ds.ids.size();
        const auto c1 = line.find(',');
        const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
        if (c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos) {
            throw FormatError("metadata row " + std::to_string(row) + ": expected 3 fields");
        }
        std::string id = line.substr(0, c1);
        if (!seen.insert(id).second) {
            throw FormatError("metadata row " + std::to_string(row) + ": duplicate id '" + id + "'");
        }
        std::string_view view(line);
        UtmPoint p{parse_double(view.substr(c1 + 1, c2 - c1 - 1), row, "easting"),
                   parse_double(view.substr(c2 + 1), row, "northing")};
        ds.ids.push_back(std::move(id));
        ds.utm.push_back(p);
    }

    if (ds.ids.size() != count) {
        throw FormatError("row-count mismatch: metadata has " + std::to_string(ds.ids.size()) +
                          " rows, descriptor blob declares " + std::to_string(count));
    }

    ds.descriptors.resize(static_cast<std::size_t>(count) * dim);
    if (!read_f32_le(blob, ds.descriptors)) {
        throw FormatError("descriptor blob: payload shorter than count * dim floats");
    }
    if (blob.peek() != std::char_traits<char>::eof()) {
        throw FormatError("descriptor blob: trailing bytes after payload");
    }
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (float v : ds.descriptor(i)) {
            if (!std::isfinite(v)) {
                throw FormatError("record " + std::to_string(i) + ": non-finite descriptor value");
            }
        }
    }
    return ds;
}

}  // namespace dnc

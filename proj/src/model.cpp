#include "dnc/model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dnc/binary_io.hpp"
#include "dnc/errors.hpp"

namespace dnc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;
constexpr char kMagic[] = "DNCMODEL";
// "DNCMODEL 1 " + 12 offset digits + '\n'
constexpr std::size_t kFirstLineBytes = 8 + 1 + 1 + 1 + 12 + 1;

std::size_t payload_floats(const DncModel& m) {
    std::size_t n = m.projection.size();
    for (const auto& h : m.heads) n += h.weights.size() + h.bias.size();
    return n;
}

}  // namespace

std::string_view to_string(HeadKind kind) { return kind == HeadKind::aamc ? "aamc" : "ce"; }

HeadKind parse_head_kind(std::string_view name) {
    if (name == "aamc") return HeadKind::aamc;
    if (name == "ce") return HeadKind::ce;
    throw InvalidInput("unknown head kind '" + std::string(name) + "' (expected aamc or ce)");
}

void DncModel::validate() const {
    const int groups = partition.num_groups();
    if (static_cast<int>(heads.size()) != groups) {
        throw InvalidInput("model has " + std::to_string(heads.size()) + " heads, expected N^2 = " +
                           std::to_string(groups));
    }
    if (!(scale > 0)) throw InvalidInput("scale s must be positive");
    if (!(margin >= 0 && margin < std::acos(0.0))) throw InvalidInput("margin m must be in [0, pi/2)");
    for (int k = 0; k < groups; ++k) {
        const auto& h = heads[k];
        const std::size_t rows = partition.group_classes(k).size();
        if (h.weights.rows() != rows || (rows > 0 && h.weights.cols() != embed_dim())) {
            throw InvalidInput("head " + std::to_string(k) + " has the wrong shape");
        }
        const std::size_t bias_rows = kind == HeadKind::ce ? rows : 0;
        if (h.bias.size() != bias_rows) throw InvalidInput("head " + std::to_string(k) + " bias size mismatch");
        if (kind == HeadKind::aamc) {
            for (std::size_t r = 0; r < rows; ++r) {
                if (std::abs(l2_norm<float>(h.weights.row(r)) - 1.0f) > 1e-5f) {
                    throw InvalidInput("head " + std::to_string(k) + " prototype " + std::to_string(r) +
                                       " is not unit-norm");
                }
            }
        }
    }
}

DncModel init_model(const ClassPartition& partition, HeadKind kind, std::size_t input_dim,
                    std::size_t embed_dim, double scale, double margin, std::uint64_t seed) {
    if (input_dim == 0 || embed_dim == 0) throw InvalidInput("init_model: dimensions must be positive");
    DncModel model;
    model.partition = partition;
    model.kind = kind;
    model.scale = scale;
    model.margin = margin;
    model.projection = Matrix<float>(embed_dim, input_dim);
    for (std::size_t i = 0; i < std::min(embed_dim, input_dim); ++i) model.projection(i, i) = 1.0f;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double bound = 1.0 / std::sqrt(static_cast<double>(embed_dim));
    std::uniform_real_distribution<double> uniform(-bound, bound);

    for (int k = 0; k < partition.num_groups(); ++k) {
        const std::size_t rows = partition.group_classes(k).size();
        ClassifierHead head;
        head.weights = Matrix<float>(rows, embed_dim);
        for (std::size_t r = 0; r < rows; ++r) {
            if (kind == HeadKind::aamc) {
                std::vector<double> v(embed_dim);
                double sq = 0.0;
                do {
                    sq = 0.0;
                    for (double& x : v) {
                        x = gauss(rng);
                        sq += x * x;
                    }
                } while (sq == 0.0);
                const double norm = std::sqrt(sq);
                for (std::size_t c = 0; c < embed_dim; ++c) head.weights(r, c) = static_cast<float>(v[c] / norm);
            } else {
                for (std::size_t c = 0; c < embed_dim; ++c) head.weights(r, c) = static_cast<float>(uniform(rng));
            }
        }
        if (kind == HeadKind::ce) {
            head.bias.resize(rows);
            for (float& b : head.bias) b = static_cast<float>(uniform(rng));
        }
        model.heads.push_back(std::move(head));
    }
    model.validate();
    return model;
}

std::vector<float> embed(const DncModel& model, std::span<const float> raw) {
    if (raw.size() != model.input_dim()) {
        throw InvalidInput("embed: input has dim " + std::to_string(raw.size()) + ", model expects " +
                           std::to_string(model.input_dim()));
    }
    const std::size_t d = model.embed_dim();
    std::vector<float> out(d);
    double sq = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        out[i] = dot_fast(model.projection.row(i).data(), raw.data(), raw.size());
        sq += static_cast<double>(out[i]) * out[i];
    }
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw InvalidInput("embed: non-finite input");
    if (norm < 1e-12) {
        std::fill(out.begin(), out.end(), 0.0f);
        out[0] = 1.0f;
        return out;
    }
    for (float& v : out) v = static_cast<float>(v / norm);
    return out;
}

void save_model(const DncModel& model, const fs::path& path) {
    model.validate();
    const auto& part = model.partition;
    const auto& cfg = part.config();

    json classes = json::array();
    for (const auto& c : part.classes()) classes.push_back({c.e, c.n});
    json heads = json::array();
    for (int k = 0; k < part.num_groups(); ++k) {
        const GroupIndex g = group_from_ordinal(k, cfg.group_stride);
        heads.push_back({{"group", {g.u, g.v}}, {"rows", model.heads[k].weights.rows()}});
    }
    json header = {
        {"format_version", kFormatVersion},
        {"partition",
         {{"cell_size", cfg.cell_size},
          {"group_stride", cfg.group_stride},
          {"min_images_per_class", cfg.min_images_per_class}}},
        {"classes", classes},
        {"head_kind", to_string(model.kind)},
        {"scale", model.scale},
        {"margin", model.margin},
        {"d_in", model.input_dim()},
        {"d", model.embed_dim()},
        {"heads", heads},
    };
    const std::string text = header.dump(1) + "\n";
    const std::size_t offset = kFirstLineBytes + text.size();

    char first[kFirstLineBytes + 1];
    std::snprintf(first, sizeof(first), "%s %d %012zu\n", kMagic, kFormatVersion, offset);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out.write(first, kFirstLineBytes);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    write_f32_le(out, model.projection.flat());
    for (const auto& h : model.heads) {
        write_f32_le(out, h.weights.flat());
        write_f32_le(out, h.bias);
    }
    if (!out.flush()) throw Error("write failed: " + path.string());
}

DncModel load_model(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open model file " + path.string());
    const auto file_size = static_cast<std::size_t>(fs::file_size(path));

    std::string first;
    if (!std::getline(in, first)) throw FormatError("model file is empty");
    std::istringstream fl(first);
    std::string magic;
    int version = 0;
    std::size_t offset = 0;
    fl >> magic >> version >> offset;
    if (magic != kMagic || !fl) throw FormatError("model file: bad first line");
    if (version != kFormatVersion) throw FormatError("model file: unsupported version " + std::to_string(version));
    if (offset < first.size() + 1 || offset > file_size) throw FormatError("model file: bad payload offset");

    std::string text(offset - first.size() - 1, '\0');
    in.read(text.data(), static_cast<std::streamsize>(text.size()));
    if (!in) throw FormatError("model file: truncated header");

    DncModel model;
    std::vector<std::size_t> declared_rows;
    try {
        const json header = json::parse(text);
        PartitionConfig cfg;
        cfg.cell_size = header.at("partition").at("cell_size").get<double>();
        cfg.group_stride = header.at("partition").at("group_stride").get<int>();
        cfg.min_images_per_class = header.at("partition").at("min_images_per_class").get<std::size_t>();
        std::vector<CellIndex> classes;
        for (const auto& c : header.at("classes")) {
            classes.push_back({c.at(0).get<std::int64_t>(), c.at(1).get<std::int64_t>()});
        }
        model.partition = ClassPartition(cfg, std::move(classes));
        model.kind = parse_head_kind(header.at("head_kind").get<std::string>());
        model.scale = header.at("scale").get<double>();
        model.margin = header.at("margin").get<double>();
        const auto d_in = header.at("d_in").get<std::size_t>();
        const auto d = header.at("d").get<std::size_t>();
        model.projection = Matrix<float>(d, d_in);
        for (const auto& h : header.at("heads")) declared_rows.push_back(h.at("rows").get<std::size_t>());
    } catch (const json::exception& e) {
        throw FormatError(std::string("model header: ") + e.what());
    } catch (const InvalidInput& e) {
        throw FormatError(std::string("model header: ") + e.what());
    }

    const int groups = model.partition.num_groups();
    if (static_cast<int>(declared_rows.size()) != groups) {
        throw FormatError("model header declares " + std::to_string(declared_rows.size()) +
                          " prototype blocks but N^2 = " + std::to_string(groups));
    }
    for (int k = 0; k < groups; ++k) {
        const std::size_t rows = model.partition.group_classes(k).size();
        if (declared_rows[k] != rows) {
            throw FormatError("model header: block " + std::to_string(k) + " declares " +
                              std::to_string(declared_rows[k]) + " rows, class list implies " +
                              std::to_string(rows));
        }
        ClassifierHead head;
        head.weights = Matrix<float>(rows, model.embed_dim());
        if (model.kind == HeadKind::ce) head.bias.resize(rows);
        model.heads.push_back(std::move(head));
    }

    const std::size_t expected = 4 * payload_floats(model);
    if (file_size - offset != expected) {
        throw FormatError("model payload is " + std::to_string(file_size - offset) + " bytes, header implies " +
                          std::to_string(expected));
    }
    bool ok = read_f32_le(in, model.projection.flat());
    for (auto& h : model.heads) {
        ok = ok && read_f32_le(in, h.weights.flat()) && read_f32_le(in, h.bias);
    }
    if (!ok) throw FormatError("model payload truncated");
    try {
        model.validate();
    } catch (const InvalidInput& e) {
        throw FormatError(std::string("model payload: ") + e.what());
    }
    return model;
}

}  // namespace dnc

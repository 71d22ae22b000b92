// JSON documents for fitted models, conditioned bases and particle checkpoints,
// plus a small CSV writer.
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "condgp/conditioning.hpp"
#include "condgp/errors.hpp"
#include "condgp/filter.hpp"
#include "condgp/hilbert_gp.hpp"

namespace condgp {

using json = nlohmann::json;

inline json vector_to_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline VectorXd vector_from_json(const json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

/// Row-major flattening.
inline json matrix_to_json(const MatrixXd& m) {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
    return flat;
}

inline MatrixXd matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols) {
    const auto flat = j.get<std::vector<double>>();
    if (static_cast<Eigen::Index>(flat.size()) != rows * cols) throw InputError("matrix_from_json: size mismatch");
    MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = flat[static_cast<std::size_t>(r * cols + c)];
    return m;
}

inline void to_json(json& j, const Domain& d) { j = json{{"lower", vector_to_json(d.lower)}, {"upper", vector_to_json(d.upper)}}; }
inline void from_json(const json& j, Domain& d) { d = Domain(vector_from_json(j.at("lower")), vector_from_json(j.at("upper"))); }

inline void to_json(json& j, const Hyperparameters& h) {
    j = json{{"sigma2", h.signal_variance}, {"l", h.lengthscale}, {"sigma_xi2", h.noise_variance}};
}
inline void from_json(const json& j, Hyperparameters& h) {
    h = Hyperparameters(j.at("sigma2").get<double>(), j.at("l").get<double>(), j.at("sigma_xi2").get<double>());
}

inline void to_json(json& j, const BasisSpec& s) {
    j = json{{"domain", s.domain()}, {"hyper", s.hyper()}, {"indices", s.indices()}};
}
inline void from_json(const json& j, BasisSpec& s) {
    s = BasisSpec(j.at("domain").get<Domain>(), j.at("indices").get<std::vector<IndexTuple>>(),
                  j.at("hyper").get<Hyperparameters>());
}

/// {domain, hyper, indices, w}
inline void to_json(json& j, const HilbertGpModel& m) {
    j = m.spec;
    j["w"] = vector_to_json(m.w);
}
inline void from_json(const json& j, HilbertGpModel& m) {
    m = HilbertGpModel(j.get<BasisSpec>(), vector_from_json(j.at("w")));
}

/// {spec_ref, M, Z_M (row-major N×M), singular_values, explained_energy}
inline void to_json(json& j, const ConditionedBasis& b) {
    j = json{{"spec_ref", b.spec},
             {"M", b.rank()},
             {"N", b.Z.rows()},
             {"Z_M", matrix_to_json(b.Z)},
             {"singular_values", vector_to_json(b.singular_values)},
             {"explained_energy", b.explained_energy}};
}
inline void from_json(const json& j, ConditionedBasis& b) {
    b.spec = j.at("spec_ref").get<BasisSpec>();
    const auto m = j.at("M").get<Eigen::Index>();
    const auto n = static_cast<Eigen::Index>(b.spec.count());
    b.Z = matrix_from_json(j.at("Z_M"), n, m);
    b.singular_values = vector_from_json(j.at("singular_values"));
    b.explained_energy = j.at("explained_energy").get<double>();
    if (b.singular_values.size() != m) throw InputError("ConditionedBasis JSON: singular_values length must equal M");
}

inline void to_json(json& j, const NoiseStats& s) {
    j = json{{"nu", s.nu}, {"n_y", s.dim()}, {"Lambda", matrix_to_json(s.Lambda)}};
}
inline void from_json(const json& j, NoiseStats& s) {
    const auto n = j.at("n_y").get<Eigen::Index>();
    s.nu = j.at("nu").get<double>();
    s.Lambda = matrix_from_json(j.at("Lambda"), n, n);
}

inline void to_json(json& j, const Particle& p) {
    json v = json::array();
    for (const auto& vi : p.v) v.push_back(vector_to_json(vi));
    j = json{{"x", vector_to_json(p.x)}, {"v", v}, {"weight", p.weight}, {"stats", p.stats}, {"valid", p.valid}};
}
inline void from_json(const json& j, Particle& p) {
    p.x = vector_from_json(j.at("x"));
    p.v.clear();
    for (const auto& vi : j.at("v")) p.v.push_back(vector_from_json(vi));
    p.weight = j.at("weight").get<double>();
    p.stats = j.at("stats").get<NoiseStats>();
    p.valid = j.value("valid", true);
}

/// Checkpoint of a full particle set.
inline void to_json(json& j, const ParticleSet& s) {
    j = json{{"step", s.step}, {"seed", s.seed}, {"particles", s.particles}};
}
inline void from_json(const json& j, ParticleSet& s) {
    s.step = j.at("step").get<std::size_t>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.particles = j.at("particles").get<std::vector<Particle>>();
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
}

inline json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return json::parse(in);
}

/// %.17g: round-trips every double.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Header row first, then one line per row.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(open(path)) {
        write_row(header);
    }

    void write_row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << '\n';
    }

    void write_row(const std::vector<double>& values) {
        for (std::size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << format_double(values[i]);
        out_ << '\n';
    }

private:
    static std::ofstream open(const std::filesystem::path& path) {
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
        return out;
    }

    std::ofstream out_;
};

/// Reads a numeric CSV with a header row.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw InputError("CsvTable: no column '" + name + "'");
    }
};

inline CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    CsvTable t;
    std::string line;
    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            const auto pos = s.find(',', start);
            cells.push_back(s.substr(start, pos - start));
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        return cells;
    };
    if (std::getline(in, line)) t.header = split(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        for (const auto& c : split(line)) row.push_back(std::stod(c));
        t.rows.push_back(std::move(row));
    }
    return t;
}

}  // namespace condgp

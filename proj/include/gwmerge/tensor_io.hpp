#pragma once

// Container formats for embeddings, model snapshots, matrices, merge plans
// and prediction files.
//
// On-disk layouts (all multi-byte values little-endian, all reals f32):
//
//   GWE1 embeddings:  "GWE1" | u32 rows | u32 cols | rows*cols f32, row-major
//   GWM1 snapshot:    "GWM1" | u64 manifest_length | UTF-8 JSON manifest |
//                     concatenated f32 payloads at the manifest's offsets
//                     (offsets are relative to the end of the manifest)
//   matrix CSV:       header "id,<col ids...>", one labeled row per line
//   plan JSON:        {"target_clusters": int, "clusters": [[int,...],...]}
//   prediction CSV:   header "sample_id,true_1..true_L,pred_1..pred_L", 0/1 cells
//
// In-memory values are double; files store f32, so a file read back and
// rewritten is byte-identical.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gwmerge/detail/numeric.hpp"
#include "gwmerge/error.hpp"
#include "json.hpp"

namespace gwmerge {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// Row-major matrix of feature embeddings, one row per sample.
struct EmbeddingMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }

    void validate() const {
        if (rows < 1 || cols < 1)
            fail(ErrorKind::InvariantViolation, "embedding matrix must have rows >= 1 and cols >= 1");
        if (data.size() != rows * cols)
            fail(ErrorKind::DimensionMismatch, "embedding payload length does not match rows*cols");
        for (double v : data)
            if (!std::isfinite(v)) fail(ErrorKind::NonFiniteValue, "embedding contains NaN or Inf");
    }

    bool operator==(const EmbeddingMatrix&) const = default;
};

struct SquareMatrix {
    std::size_t n = 0;
    std::vector<double> data;

    static SquareMatrix zeros(std::size_t n) { return SquareMatrix{n, std::vector<double>(n * n, 0.0)}; }

    double at(std::size_t i, std::size_t j) const { return data[i * n + j]; }
    double& at(std::size_t i, std::size_t j) { return data[i * n + j]; }

    void validate() const {
        if (n < 1) fail(ErrorKind::InvariantViolation, "square matrix must have n >= 1");
        if (data.size() != n * n)
            fail(ErrorKind::DimensionMismatch, "square matrix payload length does not match n*n");
        for (double v : data)
            if (!std::isfinite(v)) fail(ErrorKind::NonFiniteValue, "square matrix contains NaN or Inf");
    }

    bool operator==(const SquareMatrix&) const = default;
};

enum class TensorRole { Backbone, Head };

inline const char* to_string(TensorRole r) { return r == TensorRole::Backbone ? "backbone" : "head"; }

struct NamedTensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> data;
    TensorRole role = TensorRole::Backbone;

    std::size_t numel() const {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }

    bool operator==(const NamedTensor&) const = default;
};

/// Named-tensor map for one model. Tensor order is the container order and
/// is preserved through serialization.
struct ModelSnapshot {
    std::vector<NamedTensor> tensors;

    const NamedTensor* find(std::string_view name) const {
        for (const auto& t : tensors)
            if (t.name == name) return &t;
        return nullptr;
    }

    std::vector<const NamedTensor*> by_role(TensorRole role) const {
        std::vector<const NamedTensor*> out;
        for (const auto& t : tensors)
            if (t.role == role) out.push_back(&t);
        return out;
    }

    void validate() const {
        std::map<std::string_view, int> seen;
        for (const auto& t : tensors) {
            if (t.name.empty()) fail(ErrorKind::InvariantViolation, "tensor name must be nonempty");
            if (++seen[t.name] > 1) fail(ErrorKind::DuplicateTensorName, "duplicate tensor name: " + t.name);
            for (std::size_t d : t.shape)
                if (d < 1) fail(ErrorKind::InvariantViolation, "tensor dimension must be >= 1: " + t.name);
            if (t.data.size() != t.numel())
                fail(ErrorKind::ShapeDataMismatch,
                     "tensor data length does not match shape product: " + t.name);
            for (double v : t.data)
                if (!std::isfinite(v)) fail(ErrorKind::NonFiniteValue, "tensor contains NaN or Inf: " + t.name);
        }
    }

    bool operator==(const ModelSnapshot&) const = default;
};

/// Ground-truth and predicted binary label matrices for one task.
struct PredictionFile {
    std::string task_id;
    std::size_t n_samples = 0;
    std::size_t n_labels = 0;
    std::vector<std::uint8_t> y_true; // n_samples * n_labels, row-major
    std::vector<std::uint8_t> y_pred;

    std::uint8_t truth(std::size_t i, std::size_t c) const { return y_true[i * n_labels + c]; }
    std::uint8_t pred(std::size_t i, std::size_t c) const { return y_pred[i * n_labels + c]; }

    void validate() const {
        if (n_samples < 1 || n_labels < 1)
            fail(ErrorKind::InvariantViolation, "prediction file must have n_samples >= 1 and n_labels >= 1");
        if (y_true.size() != n_samples * n_labels || y_pred.size() != y_true.size())
            fail(ErrorKind::DimensionMismatch, "y_true and y_pred must both be n_samples x n_labels");
        for (std::uint8_t v : y_true)
            if (v > 1) fail(ErrorKind::InvariantViolation, "y_true entries must be 0 or 1");
        for (std::uint8_t v : y_pred)
            if (v > 1) fail(ErrorKind::InvariantViolation, "y_pred entries must be 0 or 1");
    }

    bool operator==(const PredictionFile&) const = default;
};

enum class PlanProvenance { Greedy, Exact, Manual };

inline const char* to_string(PlanProvenance p) {
    switch (p) {
        case PlanProvenance::Greedy: return "greedy";
        case PlanProvenance::Exact: return "exact";
        case PlanProvenance::Manual: return "manual";
    }
    return "manual";
}

/// Partition of task indices 1..T into `target_clusters` clusters.
/// Canonical form: each cluster sorted ascending, clusters ordered by their
/// smallest member.
struct MergePlan {
    std::vector<std::vector<int>> clusters;
    int target_clusters = 0;
    double loss = 0.0;
    PlanProvenance provenance = PlanProvenance::Manual;

    int n_tasks() const {
        std::size_t n = 0;
        for (const auto& c : clusters) n += c.size();
        return static_cast<int>(n);
    }

    void canonicalize() {
        for (auto& c : clusters) std::sort(c.begin(), c.end());
        std::sort(clusters.begin(), clusters.end(),
                  [](const auto& a, const auto& b) { return a.front() < b.front(); });
    }

    void validate() const {
        if (clusters.empty()) fail(ErrorKind::InvalidPartition, "plan has no clusters");
        if (static_cast<int>(clusters.size()) != target_clusters)
            fail(ErrorKind::InvalidPartition, "cluster count does not equal target_clusters");
        std::vector<int> all;
        for (const auto& c : clusters) {
            if (c.empty()) fail(ErrorKind::InvalidPartition, "plan contains an empty cluster");
            all.insert(all.end(), c.begin(), c.end());
        }
        std::sort(all.begin(), all.end());
        for (std::size_t i = 0; i < all.size(); ++i)
            if (all[i] != static_cast<int>(i) + 1)
                fail(ErrorKind::InvalidPartition,
                     "clusters must cover task indices 1..T exactly once");
    }

    bool operator==(const MergePlan& other) const {
        return clusters == other.clusters && target_clusters == other.target_clusters;
    }
};

// ---------------------------------------------------------------------------
// File helpers
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::IoFailure, "cannot open for reading: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) fail(ErrorKind::IoFailure, "read failed: " + path.string());
    return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::IoFailure, "cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::IoFailure, "write failed: " + path.string());
}

inline void write_file_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::IoFailure, "cannot open for writing: " + path.string());
    out << text;
    if (!out) fail(ErrorKind::IoFailure, "write failed: " + path.string());
}

inline std::string read_file_text(const std::filesystem::path& path) {
    auto bytes = read_file_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

/// Splits text into lines; tolerates \r\n and a trailing newline.
inline std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines = split(text, '\n');
    while (!lines.empty() && gwmerge::detail::trim(lines.back()).empty()) lines.pop_back();
    return lines;
}

} // namespace detail

// ---------------------------------------------------------------------------
// GWE1 embeddings
// ---------------------------------------------------------------------------

inline std::vector<std::uint8_t> encode_embeddings(const EmbeddingMatrix& m) {
    m.validate();
    std::vector<std::uint8_t> out;
    out.reserve(12 + 4 * m.data.size());
    out.insert(out.end(), {'G', 'W', 'E', '1'});
    detail::put_u32_le(out, static_cast<std::uint32_t>(m.rows));
    detail::put_u32_le(out, static_cast<std::uint32_t>(m.cols));
    for (double v : m.data) detail::put_f32_le(out, static_cast<float>(v));
    return out;
}

inline EmbeddingMatrix decode_embeddings(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 12) fail(ErrorKind::MalformedHeader, "GWE1 header truncated");
    if (!(bytes[0] == 'G' && bytes[1] == 'W' && bytes[2] == 'E' && bytes[3] == '1'))
        fail(ErrorKind::MalformedHeader, "bad GWE1 magic");
    const std::size_t rows = detail::get_u32_le(bytes.data() + 4);
    const std::size_t cols = detail::get_u32_le(bytes.data() + 8);
    if (rows < 1 || cols < 1) fail(ErrorKind::MalformedHeader, "GWE1 header declares empty matrix");
    if (bytes.size() != 12 + 4 * rows * cols)
        fail(ErrorKind::DimensionMismatch, "GWE1 payload length does not match rows*cols");
    EmbeddingMatrix m{rows, cols, {}};
    m.data.resize(rows * cols);
    for (std::size_t i = 0; i < rows * cols; ++i)
        m.data[i] = static_cast<double>(detail::get_f32_le(bytes.data() + 12 + 4 * i));
    m.validate();
    return m;
}

/// CSV fallback: comma-separated decimals, one sample per line.
inline EmbeddingMatrix parse_embeddings_csv(std::string_view text) {
    auto lines = detail::split_lines(text);
    if (lines.empty()) fail(ErrorKind::MalformedHeader, "embedding CSV is empty");
    EmbeddingMatrix m;
    m.rows = lines.size();
    for (std::size_t i = 0; i < lines.size(); ++i) {
        auto cells = detail::split(lines[i], ',');
        if (i == 0) {
            m.cols = cells.size();
        } else if (cells.size() != m.cols) {
            fail(ErrorKind::DimensionMismatch, "embedding CSV line " + std::to_string(i + 1) +
                                                   " has a different column count");
        }
        for (auto cell : cells) {
            double v;
            if (!gwmerge::detail::try_parse_double(cell, v))
                fail(ErrorKind::MalformedHeader, "embedding CSV line " + std::to_string(i + 1) +
                                                     ": cannot parse '" + std::string(cell) + "'");
            if (!std::isfinite(v))
                fail(ErrorKind::NonFiniteValue, "embedding CSV line " + std::to_string(i + 1) +
                                                    " contains a non-finite value");
            m.data.push_back(v);
        }
    }
    m.validate();
    return m;
}

/// Reads either the GWE1 binary format (detected by magic) or numeric CSV.
inline EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
    auto bytes = detail::read_file_bytes(path);
    if (bytes.size() >= 4 && bytes[0] == 'G' && bytes[1] == 'W' && bytes[2] == 'E' && bytes[3] == '1')
        return decode_embeddings(bytes);
    return parse_embeddings_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

inline void write_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path) {
    detail::write_file_bytes(path, encode_embeddings(m));
}

// ---------------------------------------------------------------------------
// GWM1 model snapshots
// ---------------------------------------------------------------------------

struct SnapshotReadOptions {
    /// Tensors without an explicit manifest role are tagged Head when their
    /// name starts with one of these prefixes, Backbone otherwise. With an
    /// empty list an untagged tensor has no resolvable role and is an error.
    std::vector<std::string> head_prefixes = {"classifier.", "head."};
};

inline std::vector<std::uint8_t> encode_snapshot(const ModelSnapshot& snap) {
    snap.validate();
    nlohmann::json manifest = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& t : snap.tensors) {
        nlohmann::json entry;
        entry["name"] = t.name;
        entry["shape"] = t.shape;
        entry["role"] = to_string(t.role);
        entry["offset"] = offset;
        entry["length"] = static_cast<std::uint64_t>(4 * t.numel());
        manifest.push_back(entry);
        offset += 4 * t.numel();
    }
    const std::string manifest_text = manifest.dump();
    std::vector<std::uint8_t> out;
    out.reserve(12 + manifest_text.size() + offset);
    out.insert(out.end(), {'G', 'W', 'M', '1'});
    detail::put_u64_le(out, manifest_text.size());
    out.insert(out.end(), manifest_text.begin(), manifest_text.end());
    for (const auto& t : snap.tensors)
        for (double v : t.data) detail::put_f32_le(out, static_cast<float>(v));
    return out;
}

inline ModelSnapshot decode_snapshot(const std::vector<std::uint8_t>& bytes,
                                     const SnapshotReadOptions& opts = {}) {
    if (bytes.size() < 12) fail(ErrorKind::MalformedManifest, "GWM1 header truncated");
    if (!(bytes[0] == 'G' && bytes[1] == 'W' && bytes[2] == 'M' && bytes[3] == '1'))
        fail(ErrorKind::MalformedManifest, "bad GWM1 magic");
    const std::uint64_t manifest_len = detail::get_u64_le(bytes.data() + 4);
    if (manifest_len > bytes.size() - 12)
        fail(ErrorKind::MalformedManifest, "GWM1 manifest extends past end of file");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + manifest_len);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::MalformedManifest, std::string("GWM1 manifest is not valid JSON: ") + e.what());
    }
    if (!manifest.is_array()) fail(ErrorKind::MalformedManifest, "GWM1 manifest must be a JSON array");

    const std::uint8_t* payload = bytes.data() + 12 + manifest_len;
    const std::uint64_t payload_size = bytes.size() - 12 - manifest_len;

    ModelSnapshot snap;
    for (const auto& entry : manifest) {
        if (!entry.is_object() || !entry.contains("name") || !entry.contains("shape") ||
            !entry.contains("offset") || !entry.contains("length"))
            fail(ErrorKind::MalformedManifest, "GWM1 manifest entry missing name/shape/offset/length");
        NamedTensor t;
        if (!entry["name"].is_string()) fail(ErrorKind::MalformedManifest, "tensor name must be a string");
        t.name = entry["name"].get<std::string>();
        if (t.name.empty()) fail(ErrorKind::MalformedManifest, "tensor name must be nonempty");
        if (!entry["shape"].is_array()) fail(ErrorKind::MalformedManifest, "tensor shape must be an array");
        for (const auto& d : entry["shape"]) {
            if (!d.is_number_integer() || d.get<std::int64_t>() < 1)
                fail(ErrorKind::MalformedManifest, "tensor dimensions must be integers >= 1: " + t.name);
            t.shape.push_back(d.get<std::size_t>());
        }
        const std::uint64_t offset = entry["offset"].get<std::uint64_t>();
        const std::uint64_t length = entry["length"].get<std::uint64_t>();
        if (length != 4 * t.numel())
            fail(ErrorKind::ShapeDataMismatch, "declared length does not match shape: " + t.name);
        if (offset > payload_size || length > payload_size - offset)
            fail(ErrorKind::ShapeDataMismatch, "tensor payload extends past end of file: " + t.name);
        if (entry.contains("role")) {
            const std::string role = entry["role"].get<std::string>();
            if (role == "backbone") t.role = TensorRole::Backbone;
            else if (role == "head") t.role = TensorRole::Head;
            else fail(ErrorKind::MalformedManifest, "unknown tensor role '" + role + "': " + t.name);
        } else {
            if (opts.head_prefixes.empty())
                fail(ErrorKind::UntaggedTensor, "no role resolvable for tensor: " + t.name);
            bool is_head = false;
            for (const auto& prefix : opts.head_prefixes)
                if (t.name.rfind(prefix, 0) == 0) { is_head = true; break; }
            t.role = is_head ? TensorRole::Head : TensorRole::Backbone;
        }
        t.data.resize(t.numel());
        for (std::size_t i = 0; i < t.data.size(); ++i)
            t.data[i] = static_cast<double>(detail::get_f32_le(payload + offset + 4 * i));
        for (double v : t.data)
            if (!std::isfinite(v)) fail(ErrorKind::NonFiniteValue, "tensor contains NaN or Inf: " + t.name);
        snap.tensors.push_back(std::move(t));
    }
    snap.validate();
    return snap;
}

inline ModelSnapshot read_snapshot(const std::filesystem::path& path, const SnapshotReadOptions& opts = {}) {
    return decode_snapshot(detail::read_file_bytes(path), opts);
}

inline void write_snapshot(const ModelSnapshot& snap, const std::filesystem::path& path) {
    detail::write_file_bytes(path, encode_snapshot(snap));
}

// ---------------------------------------------------------------------------
// Labeled square-matrix CSV (distance / similarity matrices)
// ---------------------------------------------------------------------------

struct LabeledMatrix {
    SquareMatrix matrix;
    std::vector<std::string> ids;

    bool operator==(const LabeledMatrix&) const = default;
};

inline std::string encode_matrix_csv(const SquareMatrix& m, const std::vector<std::string>& ids) {
    m.validate();
    if (ids.size() != m.n) fail(ErrorKind::DimensionMismatch, "matrix CSV needs one id per row");
    std::string out = "id";
    for (const auto& id : ids) out += "," + id;
    out += "\n";
    for (std::size_t i = 0; i < m.n; ++i) {
        out += ids[i];
        for (std::size_t j = 0; j < m.n; ++j) out += "," + detail::format_double(m.at(i, j));
        out += "\n";
    }
    return out;
}

inline LabeledMatrix parse_matrix_csv(std::string_view text) {
    auto lines = detail::split_lines(text);
    if (lines.size() < 2) fail(ErrorKind::MalformedHeader, "matrix CSV needs a header and at least one row");
    auto header = detail::split(lines[0], ',');
    if (header.size() < 2 || detail::trim(header[0]) != "id")
        fail(ErrorKind::MalformedHeader, "matrix CSV header must start with 'id'");
    const std::size_t n = header.size() - 1;
    if (lines.size() != n + 1)
        fail(ErrorKind::DimensionMismatch, "matrix CSV row count does not match header");
    LabeledMatrix lm;
    lm.matrix = SquareMatrix::zeros(n);
    for (std::size_t j = 0; j < n; ++j) lm.ids.emplace_back(detail::trim(header[j + 1]));
    for (std::size_t i = 0; i < n; ++i) {
        auto cells = detail::split(lines[i + 1], ',');
        if (cells.size() != n + 1)
            fail(ErrorKind::DimensionMismatch, "matrix CSV line " + std::to_string(i + 2) +
                                                   " has a different column count");
        if (std::string_view(detail::trim(cells[0])) != lm.ids[i])
            fail(ErrorKind::MalformedHeader, "matrix CSV row label does not match header order");
        for (std::size_t j = 0; j < n; ++j) {
            double v;
            if (!gwmerge::detail::try_parse_double(cells[j + 1], v))
                fail(ErrorKind::MalformedHeader, "matrix CSV line " + std::to_string(i + 2) +
                                                     ": cannot parse '" + std::string(cells[j + 1]) + "'");
            lm.matrix.at(i, j) = v;
        }
    }
    lm.matrix.validate();
    return lm;
}

inline LabeledMatrix read_matrix_csv(const std::filesystem::path& path) {
    return parse_matrix_csv(detail::read_file_text(path));
}

inline void write_matrix_csv(const SquareMatrix& m, const std::vector<std::string>& ids,
                             const std::filesystem::path& path) {
    detail::write_file_text(path, encode_matrix_csv(m, ids));
}

// ---------------------------------------------------------------------------
// Merge plan JSON
// ---------------------------------------------------------------------------

inline std::string encode_plan_json(const MergePlan& plan) {
    plan.validate();
    nlohmann::json j;
    j["target_clusters"] = plan.target_clusters;
    j["clusters"] = plan.clusters;
    return j.dump(2) + "\n";
}

inline MergePlan parse_plan_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::MalformedHeader, std::string("plan is not valid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("target_clusters") || !j.contains("clusters"))
        fail(ErrorKind::MalformedHeader, "plan JSON must contain target_clusters and clusters");
    MergePlan plan;
    if (!j["target_clusters"].is_number_integer())
        fail(ErrorKind::MalformedHeader, "target_clusters must be an integer");
    plan.target_clusters = j["target_clusters"].get<int>();
    if (!j["clusters"].is_array()) fail(ErrorKind::MalformedHeader, "clusters must be an array");
    for (const auto& c : j["clusters"]) {
        if (!c.is_array()) fail(ErrorKind::MalformedHeader, "each cluster must be an array of task indices");
        std::vector<int> cluster;
        for (const auto& v : c) {
            if (!v.is_number_integer()) fail(ErrorKind::MalformedHeader, "task indices must be integers");
            cluster.push_back(v.get<int>());
        }
        plan.clusters.push_back(std::move(cluster));
    }
    plan.canonicalize();
    plan.validate();
    return plan;
}

inline MergePlan read_plan(const std::filesystem::path& path) {
    return parse_plan_json(detail::read_file_text(path));
}

inline void write_plan(const MergePlan& plan, const std::filesystem::path& path) {
    detail::write_file_text(path, encode_plan_json(plan));
}

// ---------------------------------------------------------------------------
// Prediction CSV
// ---------------------------------------------------------------------------

inline std::string encode_predictions_csv(const PredictionFile& p) {
    p.validate();
    std::string out = "sample_id";
    for (std::size_t c = 1; c <= p.n_labels; ++c) out += ",true_" + std::to_string(c);
    for (std::size_t c = 1; c <= p.n_labels; ++c) out += ",pred_" + std::to_string(c);
    out += "\n";
    for (std::size_t i = 0; i < p.n_samples; ++i) {
        out += std::to_string(i + 1);
        for (std::size_t c = 0; c < p.n_labels; ++c) out += p.truth(i, c) ? ",1" : ",0";
        for (std::size_t c = 0; c < p.n_labels; ++c) out += p.pred(i, c) ? ",1" : ",0";
        out += "\n";
    }
    return out;
}

inline PredictionFile parse_predictions_csv(std::string_view text, const std::string& task_id) {
    auto lines = detail::split_lines(text);
    if (lines.size() < 2)
        fail(ErrorKind::MalformedHeader, "prediction CSV needs a header and at least one row");
    auto header = detail::split(lines[0], ',');
    if (header.size() < 3 || detail::trim(header[0]) != "sample_id" || (header.size() - 1) % 2 != 0)
        fail(ErrorKind::MalformedHeader,
             "prediction CSV header must be sample_id followed by equal true/pred column groups");
    PredictionFile p;
    p.task_id = task_id;
    p.n_labels = (header.size() - 1) / 2;
    p.n_samples = lines.size() - 1;
    p.y_true.reserve(p.n_samples * p.n_labels);
    p.y_pred.reserve(p.n_samples * p.n_labels);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        auto cells = detail::split(lines[i], ',');
        if (cells.size() != header.size())
            fail(ErrorKind::DimensionMismatch,
                 "prediction CSV line " + std::to_string(i + 1) + " has a different column count");
        for (std::size_t c = 0; c < 2 * p.n_labels; ++c) {
            auto cell = detail::trim(cells[c + 1]);
            std::uint8_t v;
            if (cell == "0") v = 0;
            else if (cell == "1") v = 1;
            else fail(ErrorKind::InvariantViolation,
                      "prediction CSV line " + std::to_string(i + 1) + ": values must be 0 or 1");
            (c < p.n_labels ? p.y_true : p.y_pred).push_back(v);
        }
    }
    p.validate();
    return p;
}

inline PredictionFile read_predictions(const std::filesystem::path& path, std::string task_id = "") {
    if (task_id.empty()) task_id = path.stem().string();
    return parse_predictions_csv(detail::read_file_text(path), task_id);
}

inline void write_predictions(const PredictionFile& p, const std::filesystem::path& path) {
    detail::write_file_text(path, encode_predictions_csv(p));
}

} // namespace gwmerge

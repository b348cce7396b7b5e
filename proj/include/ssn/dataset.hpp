#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ssn/rng.hpp"

namespace ssn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct SparseEntry {
    std::int32_t index;
    double value;
};

/// Binary classification dataset: n feature rows of dimension d with labels
/// in {-1, +1}. Rows are stored either as a dense row-major matrix or in
/// compressed sparse row form; all consumers go through the row accessors
/// below so both layouts behave identically.
class Dataset {
public:
    Dataset() = default;

    static Dataset dense(Matrix features, std::vector<double> labels) {
        Dataset ds;
        ds.dense_rows_ = std::move(features);
        ds.labels_ = std::move(labels);
        ds.n_ = static_cast<int>(ds.dense_rows_.rows());
        ds.d_ = static_cast<int>(ds.dense_rows_.cols());
        ds.sparse_ = false;
        ds.validate();
        return ds;
    }

    static Dataset sparse(std::vector<std::vector<SparseEntry>> rows,
                          std::vector<double> labels, int dimension) {
        Dataset ds;
        ds.sparse_ = true;
        ds.n_ = static_cast<int>(rows.size());
        ds.d_ = dimension;
        ds.labels_ = std::move(labels);
        ds.offsets_.reserve(rows.size() + 1);
        ds.offsets_.push_back(0);
        for (auto& row : rows) {
            std::sort(row.begin(), row.end(),
                      [](const SparseEntry& a, const SparseEntry& b) { return a.index < b.index; });
            ds.entries_.insert(ds.entries_.end(), row.begin(), row.end());
            ds.offsets_.push_back(static_cast<std::int64_t>(ds.entries_.size()));
        }
        ds.validate();
        return ds;
    }

    int n() const { return n_; }
    int d() const { return d_; }
    bool is_sparse() const { return sparse_; }
    double label(int i) const { return labels_[static_cast<std::size_t>(i)]; }
    const std::vector<double>& labels() const { return labels_; }

    /// x_i . w
    double dot_row(int i, const Vector& w) const {
        if (!sparse_) return dense_rows_.row(i).dot(w);
        double acc = 0.0;
        for (std::int64_t e = offsets_[i]; e < offsets_[i + 1]; ++e)
            acc += entries_[static_cast<std::size_t>(e)].value * w[entries_[static_cast<std::size_t>(e)].index];
        return acc;
    }

    /// out += coeff * x_i
    void add_scaled_row(int i, double coeff, Vector& out) const {
        if (!sparse_) {
            out += coeff * dense_rows_.row(i).transpose();
            return;
        }
        for (std::int64_t e = offsets_[i]; e < offsets_[i + 1]; ++e)
            out[entries_[static_cast<std::size_t>(e)].index] += coeff * entries_[static_cast<std::size_t>(e)].value;
    }

    /// H += coeff * x_i x_i^T (lower triangle filled, caller symmetrizes or
    /// uses selfadjointView).
    void add_scaled_outer(int i, double coeff, Matrix& h) const {
        if (!sparse_) {
            h.selfadjointView<Eigen::Lower>().rankUpdate(dense_rows_.row(i).transpose(), coeff);
            return;
        }
        for (std::int64_t a = offsets_[i]; a < offsets_[i + 1]; ++a)
            for (std::int64_t b = offsets_[i]; b <= a; ++b)
                h(entries_[static_cast<std::size_t>(a)].index, entries_[static_cast<std::size_t>(b)].index) +=
                    coeff * entries_[static_cast<std::size_t>(a)].value * entries_[static_cast<std::size_t>(b)].value;
    }

    double row_squared_norm(int i) const {
        if (!sparse_) return dense_rows_.row(i).squaredNorm();
        double acc = 0.0;
        for (std::int64_t e = offsets_[i]; e < offsets_[i + 1]; ++e)
            acc += entries_[static_cast<std::size_t>(e)].value * entries_[static_cast<std::size_t>(e)].value;
        return acc;
    }

    Vector dense_row(int i) const {
        if (!sparse_) return dense_rows_.row(i).transpose();
        Vector row = Vector::Zero(d_);
        for (std::int64_t e = offsets_[i]; e < offsets_[i + 1]; ++e)
            row[entries_[static_cast<std::size_t>(e)].index] = entries_[static_cast<std::size_t>(e)].value;
        return row;
    }

    std::vector<SparseEntry> sparse_row(int i) const {
        if (sparse_)
            return {entries_.begin() + offsets_[i], entries_.begin() + offsets_[i + 1]};
        std::vector<SparseEntry> row;
        for (int j = 0; j < d_; ++j)
            if (dense_rows_(i, j) != 0.0)
                row.push_back({j, dense_rows_(i, j)});
        return row;
    }

    Dataset subset(const std::vector<int>& rows) const {
        std::vector<double> labels;
        labels.reserve(rows.size());
        for (int i : rows) labels.push_back(labels_[static_cast<std::size_t>(i)]);
        if (!sparse_) {
            Matrix x(static_cast<Eigen::Index>(rows.size()), d_);
            for (std::size_t r = 0; r < rows.size(); ++r) x.row(static_cast<Eigen::Index>(r)) = dense_rows_.row(rows[r]);
            return dense(std::move(x), std::move(labels));
        }
        std::vector<std::vector<SparseEntry>> out;
        out.reserve(rows.size());
        for (int i : rows) out.push_back(sparse_row(i));
        return sparse(std::move(out), std::move(labels), d_);
    }

    bool operator==(const Dataset& other) const {
        if (n_ != other.n_ || d_ != other.d_ || labels_ != other.labels_) return false;
        for (int i = 0; i < n_; ++i)
            if (dense_row(i) != other.dense_row(i)) return false;
        return true;
    }

private:
    void validate() const {
        if (n_ < 1) throw std::invalid_argument("Dataset: need at least one sample");
        if (d_ < 1) throw std::invalid_argument("Dataset: dimension must be positive");
        if (static_cast<int>(labels_.size()) != n_)
            throw std::invalid_argument("Dataset: label count does not match row count");
        for (double y : labels_)
            if (y != 1.0 && y != -1.0)
                throw std::invalid_argument("Dataset: labels must be -1 or +1");
        if (sparse_) {
            for (const auto& e : entries_) {
                if (e.index < 0 || e.index >= d_)
                    throw std::invalid_argument("Dataset: sparse index out of range");
                if (!std::isfinite(e.value))
                    throw std::invalid_argument("Dataset: non-finite feature value");
            }
        } else if (!dense_rows_.allFinite()) {
            throw std::invalid_argument("Dataset: non-finite feature value");
        }
    }

    bool sparse_ = false;
    int n_ = 0;
    int d_ = 0;
    Matrix dense_rows_;
    std::vector<SparseEntry> entries_;
    std::vector<std::int64_t> offsets_;
    std::vector<double> labels_;
};

struct MarginSpec {
    double margin = 0.1;
    int n = 1000;
    int d = 20;
    std::uint64_t seed = 0;
};

struct GeneratedDataset {
    Dataset data;
    Vector separator;  // unit vector w-bar with y_i (x_i . w-bar) >= margin
};

namespace detail {

inline Vector random_unit_vector(int d, Rng& rng) {
    Vector v(d);
    for (;;) {
        for (int j = 0; j < d; ++j) v[j] = rng.next_normal();
        const double norm = v.norm();
        if (norm > 1e-12) return v / norm;
    }
}

}  // namespace detail

/// Synthetic linearly-separable data: a planted unit separator w-bar, and
/// unit-norm features rejection-sampled from the sphere until
/// |x . w-bar| >= margin, labeled by the sign of the inner product. Every
/// sample therefore satisfies y (x . w-bar) >= margin exactly.
inline GeneratedDataset generate_margin_dataset(const MarginSpec& spec) {
    if (spec.n < 1) throw std::invalid_argument("generate_margin_dataset: n must be >= 1");
    if (spec.d < 2) throw std::invalid_argument("generate_margin_dataset: d must be >= 2");
    if (spec.margin <= 0.0) throw std::invalid_argument("generate_margin_dataset: margin must be positive");
    if (spec.margin > 1.0)
        throw std::invalid_argument("generate_margin_dataset: margin > 1 is infeasible with unit-norm features");

    Rng rng(spec.seed);
    Vector separator = detail::random_unit_vector(spec.d, rng);

    Matrix x(spec.n, spec.d);
    std::vector<double> labels(static_cast<std::size_t>(spec.n));
    for (int i = 0; i < spec.n; ++i) {
        for (;;) {
            Vector candidate = detail::random_unit_vector(spec.d, rng);
            const double t = candidate.dot(separator);
            if (std::abs(t) >= spec.margin) {
                x.row(i) = candidate.transpose();
                labels[static_cast<std::size_t>(i)] = t >= 0.0 ? 1.0 : -1.0;
                break;
            }
        }
    }
    return {Dataset::dense(std::move(x), std::move(labels)), std::move(separator)};
}

namespace detail {

inline const char* kBase64Chars = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string base64_encode(const std::uint8_t* data, std::size_t len) {
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    for (std::size_t i = 0; i < len; i += 3) {
        std::uint32_t chunk = static_cast<std::uint32_t>(data[i]) << 16;
        if (i + 1 < len) chunk |= static_cast<std::uint32_t>(data[i + 1]) << 8;
        if (i + 2 < len) chunk |= static_cast<std::uint32_t>(data[i + 2]);
        out.push_back(kBase64Chars[(chunk >> 18) & 0x3f]);
        out.push_back(kBase64Chars[(chunk >> 12) & 0x3f]);
        out.push_back(i + 1 < len ? kBase64Chars[(chunk >> 6) & 0x3f] : '=');
        out.push_back(i + 2 < len ? kBase64Chars[chunk & 0x3f] : '=');
    }
    return out;
}

inline std::vector<std::uint8_t> base64_decode(const std::string& text) {
    auto value_of = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    std::vector<std::uint8_t> out;
    std::uint32_t chunk = 0;
    int bits = 0;
    for (char c : text) {
        if (c == '=') break;
        const int v = value_of(c);
        if (v < 0) throw std::invalid_argument("base64: invalid character");
        chunk = (chunk << 6) | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<std::uint8_t>((chunk >> bits) & 0xff));
        }
    }
    return out;
}

inline std::string encode_separator(const Vector& w) {
    // little-endian doubles
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(w.size()) * 8);
    for (Eigen::Index j = 0; j < w.size(); ++j) {
        std::uint64_t bits;
        const double value = w[j];
        static_assert(sizeof(bits) == sizeof(value));
        std::memcpy(&bits, &value, 8);
        for (int k = 0; k < 8; ++k)
            bytes[static_cast<std::size_t>(j) * 8 + static_cast<std::size_t>(k)] =
                static_cast<std::uint8_t>((bits >> (8 * k)) & 0xff);
    }
    return base64_encode(bytes.data(), bytes.size());
}

inline Vector decode_separator(const std::string& text) {
    const auto bytes = base64_decode(text);
    if (bytes.size() % 8 != 0) throw std::invalid_argument("separator: truncated base64 payload");
    Vector w(static_cast<Eigen::Index>(bytes.size() / 8));
    for (Eigen::Index j = 0; j < w.size(); ++j) {
        std::uint64_t bits = 0;
        for (int k = 0; k < 8; ++k)
            bits |= static_cast<std::uint64_t>(bytes[static_cast<std::size_t>(j) * 8 + static_cast<std::size_t>(k)]) << (8 * k);
        double value;
        std::memcpy(&value, &bits, 8);
        w[j] = value;
    }
    return w;
}

}  // namespace detail

/// Parses LIBSVM text: `<label> <idx>:<val> ...` with 1-based indices.
/// Labels may be -1/+1 or 0/1 (0 maps to -1). Lines starting with '#' are
/// treated as comments. Unsorted indices are tolerated and sorted; the
/// dimension is the maximum index seen.
inline Dataset parse_libsvm(std::istream& in) {
    std::vector<std::vector<SparseEntry>> rows;
    std::vector<double> raw_labels;
    int max_index = 0;
    std::string line;
    int line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream tokens(line);
        std::string tok;
        if (!(tokens >> tok)) continue;

        auto fail = [line_number](const std::string& what) -> std::invalid_argument {
            return std::invalid_argument("parse_libsvm: line " + std::to_string(line_number) + ": " + what);
        };

        double label;
        try {
            std::size_t used = 0;
            label = std::stod(tok, &used);
            if (used != tok.size()) throw std::invalid_argument("");
        } catch (const std::exception&) {
            throw fail("malformed label '" + tok + "'");
        }
        raw_labels.push_back(label);

        std::vector<SparseEntry> row;
        while (tokens >> tok) {
            const auto colon = tok.find(':');
            if (colon == std::string::npos) throw fail("malformed token '" + tok + "'");
            int index;
            double value;
            try {
                std::size_t used = 0;
                index = std::stoi(tok.substr(0, colon), &used);
                if (used != colon) throw std::invalid_argument("");
                used = 0;
                const std::string value_text = tok.substr(colon + 1);
                value = std::stod(value_text, &used);
                if (used != value_text.size()) throw std::invalid_argument("");
            } catch (const std::exception&) {
                throw fail("malformed token '" + tok + "'");
            }
            if (index < 1) throw fail("index must be >= 1");
            max_index = std::max(max_index, index);
            row.push_back({index - 1, value});
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::invalid_argument("parse_libsvm: no samples");

    std::set<double> distinct(raw_labels.begin(), raw_labels.end());
    std::vector<double> labels(raw_labels.size());
    if (distinct == std::set<double>{-1.0, 1.0} || distinct == std::set<double>{-1.0} ||
        distinct == std::set<double>{1.0}) {
        labels = raw_labels;
    } else if (distinct == std::set<double>{0.0, 1.0} || distinct == std::set<double>{0.0}) {
        for (std::size_t i = 0; i < raw_labels.size(); ++i)
            labels[i] = raw_labels[i] == 0.0 ? -1.0 : 1.0;
    } else {
        throw std::invalid_argument("parse_libsvm: label set is not binary (-1/+1 or 0/1)");
    }
    return Dataset::sparse(std::move(rows), std::move(labels), max_index);
}

/// Writes LIBSVM text (1-based indices, zeros dropped). The optional header
/// records the synthetic-generation provenance:
///   # margin=<m> seed=<s> separator=<base64 of w-bar doubles, little-endian>
inline void serialize_libsvm(const Dataset& data, std::ostream& out,
                             const MarginSpec* provenance = nullptr,
                             const Vector* separator = nullptr) {
    if (provenance != nullptr && separator != nullptr) {
        char margin_text[64];
        std::snprintf(margin_text, sizeof(margin_text), "%.17g", provenance->margin);
        out << "# margin=" << margin_text << " seed=" << provenance->seed
            << " separator=" << detail::encode_separator(*separator) << '\n';
    }
    char buffer[64];
    for (int i = 0; i < data.n(); ++i) {
        out << (data.label(i) > 0 ? "+1" : "-1");
        for (const auto& entry : data.sparse_row(i)) {
            std::snprintf(buffer, sizeof(buffer), "%.17g", entry.value);
            out << ' ' << (entry.index + 1) << ':' << buffer;
        }
        out << '\n';
    }
}

/// Reads back the `# margin=... seed=... separator=...` header written by
/// serialize_libsvm, if present on the first line.
inline bool read_cache_header(std::istream& in, MarginSpec& spec, Vector& separator) {
    std::string line;
    if (!std::getline(in, line)) return false;
    in.seekg(0);
    if (line.rfind("# margin=", 0) != 0) return false;
    std::istringstream tokens(line.substr(2));
    std::string tok;
    bool have_margin = false, have_seed = false, have_sep = false;
    while (tokens >> tok) {
        if (tok.rfind("margin=", 0) == 0) {
            spec.margin = std::stod(tok.substr(7));
            have_margin = true;
        } else if (tok.rfind("seed=", 0) == 0) {
            spec.seed = std::stoull(tok.substr(5));
            have_seed = true;
        } else if (tok.rfind("separator=", 0) == 0) {
            separator = detail::decode_separator(tok.substr(10));
            have_sep = true;
        }
    }
    return have_margin && have_seed && have_sep;
}

/// Maps each query row through RBF features against the training rows:
/// feature j of mapped row i is exp(-||x_i - t_j||^2 / (2 bandwidth^2)).
/// Mapping the training set against itself yields the kernel Gram matrix.
inline Dataset rbf_kernel_map(const Dataset& train, const Dataset& query, double bandwidth) {
    if (bandwidth <= 0.0) throw std::invalid_argument("rbf_kernel_map: bandwidth must be positive");
    if (train.d() != query.d())
        throw std::invalid_argument("rbf_kernel_map: train and query dimensions differ");

    const double inv_two_sigma_sq = 1.0 / (2.0 * bandwidth * bandwidth);
    Matrix mapped(query.n(), train.n());
    std::vector<double> train_norms(static_cast<std::size_t>(train.n()));
    for (int j = 0; j < train.n(); ++j) train_norms[static_cast<std::size_t>(j)] = train.row_squared_norm(j);
    for (int i = 0; i < query.n(); ++i) {
        const Vector qi = query.dense_row(i);
        const double qi_norm = qi.squaredNorm();
        for (int j = 0; j < train.n(); ++j) {
            const double dist_sq =
                std::max(0.0, qi_norm + train_norms[static_cast<std::size_t>(j)] - 2.0 * train.dot_row(j, qi));
            mapped(i, j) = std::exp(-dist_sq * inv_two_sigma_sq);
        }
    }
    std::vector<double> labels(query.labels());
    return Dataset::dense(std::move(mapped), std::move(labels));
}

struct Split {
    Dataset train;
    Dataset test;
};

/// Random disjoint partition with ceil(fraction*n) training rows; the
/// permutation is drawn from the seeded generator so splits reproduce.
inline Split train_test_split(const Dataset& data, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("train_test_split: fraction must lie in (0, 1)");
    if (data.n() < 2) throw std::invalid_argument("train_test_split: need at least two samples");

    const int n = data.n();
    const int n_train = static_cast<int>(std::ceil(train_fraction * n));
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    for (int i = n - 1; i > 0; --i)
        std::swap(order[static_cast<std::size_t>(i)],
                  order[static_cast<std::size_t>(rng.next_below(static_cast<std::uint64_t>(i) + 1))]);

    std::vector<int> train_rows(order.begin(), order.begin() + n_train);
    std::vector<int> test_rows(order.begin() + n_train, order.end());
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(test_rows.begin(), test_rows.end());
    return {data.subset(train_rows), data.subset(test_rows)};
}

}  // namespace ssn

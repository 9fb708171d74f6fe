#ifndef PRANK_MIPS_INDEX_HPP
#define PRANK_MIPS_INDEX_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "prank/bank.hpp"
#include "prank/encoders.hpp"
#include "prank/errors.hpp"
#include "prank/kmeans.hpp"
#include "prank/linalg.hpp"
#include "prank/random.hpp"

namespace prank {

inline constexpr int kIndexVersion = 1;

enum class IndexKind { exact, ivf };

inline std::string_view to_string(IndexKind k) { return k == IndexKind::exact ? "exact" : "ivf"; }

inline IndexKind index_kind_from_string(std::string_view s) {
    if (s == "exact") return IndexKind::exact;
    if (s == "ivf") return IndexKind::ivf;
    throw ArgumentError("unknown index variant '" + std::string(s) + "'");
}

struct IndexVariant {
    IndexKind kind = IndexKind::exact;
    std::size_t n_lists = 1;
    std::size_t n_probe = 1;
    std::uint64_t seed = 0;
    std::size_t train_iters = 20;
    std::size_t max_train_points_per_list = 64;
};

struct SearchHit {
    std::uint64_t id = 0;  // bank entry position
    double score = 0.0;    // inner product with the query

    friend bool operator==(const SearchHit&, const SearchHit&) = default;
};

// Orders hits by score descending, then id ascending.
inline bool hit_before(const SearchHit& a, const SearchHit& b) {
    return a.score != b.score ? a.score > b.score : a.id < b.id;
}

// Max-inner-product index over unit embeddings. The ivf variant partitions
// the embeddings with spherical k-means and scans only the n_probe lists
// whose centroids score highest against the query.
class MipsIndex {
public:
    MipsIndex() = default;

    static MipsIndex build(Matrix embeddings, std::vector<std::uint64_t> ids, const IndexVariant& variant) {
        MipsIndex idx;
        if (embeddings.rows() == 0) throw ArgumentError("index needs at least one embedding");
        if (static_cast<std::size_t>(embeddings.rows()) != ids.size()) throw ShapeError("ids do not match embeddings");
        for (Eigen::Index r = 0; r < embeddings.rows(); ++r)
            if (std::abs(embeddings.row(r).norm() - 1.0) > Embedding::kNormTolerance)
                throw ArgumentError("index embeddings must be unit-norm");
        idx.emb_ = std::move(embeddings);
        idx.ids_ = std::move(ids);
        idx.variant_ = variant;
        if (variant.kind == IndexKind::ivf) idx.train_lists();
        return idx;
    }

    std::size_t size() const { return ids_.size(); }
    std::size_t dim() const { return static_cast<std::size_t>(emb_.cols()); }
    const IndexVariant& variant() const { return variant_; }
    const Matrix& embeddings() const { return emb_; }
    const std::vector<std::uint64_t>& ids() const { return ids_; }
    const std::vector<std::vector<std::uint32_t>>& lists() const { return lists_; }
    const Matrix& centroids() const { return centroids_; }
    void set_n_probe(std::size_t n_probe) { variant_.n_probe = n_probe; }

    std::vector<SearchHit> search(std::span<const double> query, std::size_t top_k) const {
        if (query.size() != dim()) throw ShapeError("query dimension does not match the index");
        if (top_k == 0) throw ArgumentError("top_k must be >= 1");
        const Eigen::Map<const Eigen::VectorXd> q(query.data(), static_cast<Eigen::Index>(query.size()));
        Eigen::VectorXd scores(static_cast<Eigen::Index>(size()));
        // Per-row dot products in both variants so scores agree bit for bit.
        if (variant_.kind == IndexKind::exact) {
            std::vector<std::uint32_t> rows(size());
            std::iota(rows.begin(), rows.end(), 0u);
            for (auto r : rows) scores(r) = emb_.row(r).dot(q);
            return select(rows, scores, top_k);
        }
        const Eigen::VectorXd cscores = centroids_ * q;
        std::vector<std::uint32_t> order(lists_.size());
        std::iota(order.begin(), order.end(), 0u);
        const std::size_t probe = std::min(variant_.n_probe, order.size());
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(probe), order.end(),
                          [&](std::uint32_t a, std::uint32_t b) {
                              return cscores(a) != cscores(b) ? cscores(a) > cscores(b) : a < b;
                          });
        std::vector<std::uint32_t> rows;
        for (std::size_t i = 0; i < probe; ++i) rows.insert(rows.end(), lists_[order[i]].begin(), lists_[order[i]].end());
        for (auto r : rows) scores(r) = emb_.row(r).dot(q);
        return select(rows, scores, top_k);
    }

    std::vector<SearchHit> search(const Embedding& query, std::size_t top_k) const {
        return search(query.values(), top_k);
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw ArgumentError("cannot write " + path);
        const nlohmann::json header = {{"n", size()},
                                       {"d", dim()},
                                       {"variant", to_string(variant_.kind)},
                                       {"n_lists", variant_.kind == IndexKind::ivf ? lists_.size() : 0},
                                       {"n_probe", variant_.n_probe},
                                       {"seed", variant_.seed},
                                       {"version", kIndexVersion}};
        out << header.dump() << '\n';
        write(out, emb_.data(), static_cast<std::size_t>(emb_.size()));
        write(out, ids_.data(), ids_.size());
        if (variant_.kind == IndexKind::ivf) {
            write(out, centroids_.data(), static_cast<std::size_t>(centroids_.size()));
            write(out, list_of_.data(), list_of_.size());
        }
        if (!out) throw ArgumentError("write failed: " + path);
    }

    static MipsIndex load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ParseError("cannot open " + path);
        std::string line;
        if (!std::getline(in, line)) throw ParseError("empty index file", 1);
        MipsIndex idx;
        std::size_t n = 0, d = 0, n_lists = 0;
        try {
            const auto h = nlohmann::json::parse(line);
            if (h.at("version").get<int>() != kIndexVersion) throw ParseError("unsupported index version", 1);
            n = h.at("n").get<std::size_t>();
            d = h.at("d").get<std::size_t>();
            idx.variant_.kind = index_kind_from_string(h.at("variant").get<std::string>());
            n_lists = h.at("n_lists").get<std::size_t>();
            idx.variant_.n_lists = std::max<std::size_t>(n_lists, 1);
            idx.variant_.n_probe = h.at("n_probe").get<std::size_t>();
            idx.variant_.seed = h.at("seed").get<std::uint64_t>();
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("bad index header: ") + e.what(), 1);
        } catch (const ArgumentError& e) {
            throw ParseError(e.what(), 1);
        }
        if (n == 0 || d == 0) throw ParseError("index is empty", 1);
        idx.emb_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
        idx.ids_.resize(n);
        read(in, idx.emb_.data(), n * d);
        read(in, idx.ids_.data(), n);
        if (idx.variant_.kind == IndexKind::ivf) {
            idx.centroids_.resize(static_cast<Eigen::Index>(n_lists), static_cast<Eigen::Index>(d));
            idx.list_of_.resize(n);
            read(in, idx.centroids_.data(), n_lists * d);
            read(in, idx.list_of_.data(), n);
            idx.lists_.assign(n_lists, {});
            for (std::uint32_t r = 0; r < n; ++r) {
                if (idx.list_of_[r] >= n_lists) throw ParseError("index list id out of range");
                idx.lists_[idx.list_of_[r]].push_back(r);
            }
        }
        if (!in) throw ParseError("index file is truncated");
        if (in.peek() != std::char_traits<char>::eof()) throw ParseError("index file has trailing bytes");
        return idx;
    }

private:
    std::vector<SearchHit> select(const std::vector<std::uint32_t>& rows, const Eigen::VectorXd& scores,
                                  std::size_t top_k) const {
        std::vector<SearchHit> hits;
        hits.reserve(rows.size());
        for (auto r : rows) hits.push_back({ids_[r], scores(r)});
        const std::size_t k = std::min(top_k, hits.size());
        std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(), hit_before);
        hits.resize(k);
        return hits;
    }

    void train_lists() {
        const std::size_t n = size();
        const std::size_t k = variant_.n_lists;
        if (k == 0) throw ArgumentError("n_lists must be >= 1");
        if (k > n) throw ArgumentError("n_lists = " + std::to_string(k) + " exceeds the number of embeddings");
        if (variant_.n_probe == 0) throw ArgumentError("n_probe must be >= 1");

        // Train on a seeded subsample, then assign everything.
        std::vector<std::size_t> sample(n);
        std::iota(sample.begin(), sample.end(), 0);
        Rng rng = make_stream(variant_.seed, 0, 0x697666);
        const std::size_t cap = std::max(k, variant_.max_train_points_per_list * k);
        if (n > cap) {
            std::shuffle(sample.begin(), sample.end(), rng);
            sample.resize(cap);
            std::sort(sample.begin(), sample.end());
        }
        Matrix train(static_cast<Eigen::Index>(sample.size()), emb_.cols());
        for (std::size_t i = 0; i < sample.size(); ++i)
            train.row(static_cast<Eigen::Index>(i)) = emb_.row(static_cast<Eigen::Index>(sample[i]));

        centroids_ = kmeans_plus_plus(train, k, rng);
        std::vector<std::uint32_t> assign(sample.size());
        for (std::size_t it = 0; it < variant_.train_iters; ++it) {
            assign_rows(train, assign);
            Matrix sums = Matrix::Zero(centroids_.rows(), centroids_.cols());
            std::vector<std::size_t> counts(k, 0);
            for (std::size_t i = 0; i < assign.size(); ++i) {
                sums.row(assign[i]) += train.row(static_cast<Eigen::Index>(i));
                ++counts[assign[i]];
            }
            std::uniform_int_distribution<std::size_t> pick(0, sample.size() - 1);
            for (std::size_t c = 0; c < k; ++c) {
                const auto row = static_cast<Eigen::Index>(c);
                const double norm = sums.row(row).norm();
                if (counts[c] == 0 || norm < ad::Tape::kMinNorm)
                    centroids_.row(row) = train.row(static_cast<Eigen::Index>(pick(rng)));
                else
                    centroids_.row(row) = sums.row(row) / norm;
            }
        }
        list_of_.resize(n);
        assign_rows(emb_, list_of_);
        lists_.assign(k, {});
        for (std::uint32_t r = 0; r < n; ++r) lists_[list_of_[r]].push_back(r);
    }

    void assign_rows(const Matrix& data, std::vector<std::uint32_t>& out) const {
        const Matrix scores = data * centroids_.transpose();
        for (Eigen::Index r = 0; r < scores.rows(); ++r) {
            Eigen::Index best = 0;
            scores.row(r).maxCoeff(&best);
            out[static_cast<std::size_t>(r)] = static_cast<std::uint32_t>(best);
        }
    }

    template <class T>
    static void write(std::ostream& out, const T* data, std::size_t count) {
        out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(T)));
    }
    template <class T>
    static void read(std::istream& in, T* data, std::size_t count) {
        in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * sizeof(T)));
    }

    Matrix emb_;
    std::vector<std::uint64_t> ids_;
    IndexVariant variant_;
    Matrix centroids_;
    std::vector<std::uint32_t> list_of_;
    std::vector<std::vector<std::uint32_t>> lists_;
};

// Embeds every bank trajectory with g and indexes it under its bank position.
inline MipsIndex build_index(const TrajectoryBank& bank, const ModelParams& params, const IndexVariant& variant) {
    if (bank.size() == 0) throw ArgumentError("bank is empty");
    const auto trajs = bank.trajectories();
    Matrix emb = encode_trajectories(params, stack_trajectories(trajs));
    std::vector<std::uint64_t> ids(bank.size());
    std::iota(ids.begin(), ids.end(), std::uint64_t{0});
    return MipsIndex::build(std::move(emb), std::move(ids), variant);
}

}  // namespace prank

#endif  // PRANK_MIPS_INDEX_HPP

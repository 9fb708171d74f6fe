#ifndef PRANK_BANK_HPP
#define PRANK_BANK_HPP

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "prank/core_types.hpp"
#include "prank/dataset.hpp"
#include "prank/errors.hpp"
#include "prank/kmeans.hpp"
#include "prank/linalg.hpp"
#include "prank/random.hpp"

namespace prank {

inline constexpr int kBankVersion = 1;

enum class ClusterMethod { minibatch_kmeans, full_kmeans, none };

inline std::string_view to_string(ClusterMethod m) {
    switch (m) {
        case ClusterMethod::minibatch_kmeans: return "minibatch_kmeans";
        case ClusterMethod::full_kmeans: return "full_kmeans";
        case ClusterMethod::none: return "none";
    }
    return "?";
}

inline ClusterMethod cluster_method_from_string(std::string_view s) {
    for (auto m : {ClusterMethod::minibatch_kmeans, ClusterMethod::full_kmeans, ClusterMethod::none})
        if (to_string(m) == s) return m;
    throw ArgumentError("unknown clustering method '" + std::string(s) + "'");
}

struct BankEntry {
    std::string id;
    Trajectory trajectory;
    std::uint32_t cluster = 0;
};

// Clustered set of training trajectories; the support of h(t). Each entry is
// stored once and h(t) = 1 / (K * |cluster(t)|) carries the sampling weight.
class TrajectoryBank {
public:
    TrajectoryBank() = default;

    TrajectoryBank(std::vector<BankEntry> entries, std::size_t k, std::size_t m, double dt)
        : entries_(std::move(entries)), k_(k), m_(m), dt_(dt) {
        if (entries_.empty()) throw ArgumentError("bank is empty");
        if (k_ == 0) throw ArgumentError("bank needs at least one cluster");
        members_.assign(k_, {});
        std::unordered_set<std::string> seen;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            const auto& e = entries_[i];
            if (e.trajectory.size() != m_) throw LengthError("bank entry " + e.id + " has wrong length");
            if (e.cluster >= k_) throw ArgumentError("bank entry " + e.id + " has cluster out of range");
            if (!seen.insert(e.id).second) throw ArgumentError("duplicate bank id " + e.id);
            members_[e.cluster].push_back(i);
        }
        for (std::size_t c = 0; c < k_; ++c)
            if (members_[c].empty()) throw ArgumentError("cluster " + std::to_string(c) + " is empty");
    }

    std::size_t size() const { return entries_.size(); }
    std::size_t num_clusters() const { return k_; }
    std::size_t M() const { return m_; }
    double dt() const { return dt_; }
    const BankEntry& entry(std::size_t i) const { return entries_[i]; }
    const std::vector<BankEntry>& entries() const { return entries_; }
    const std::vector<std::size_t>& members(std::size_t cluster) const { return members_[cluster]; }

    // h(t) for entry i.
    double h_density(std::size_t i) const {
        return 1.0 / (static_cast<double>(k_) *
                      static_cast<double>(members_[entries_[i].cluster].size()));
    }

    // Two-stage draw from h: uniform cluster, then uniform member.
    std::size_t sample_h_index(Rng& rng) const {
        std::uniform_int_distribution<std::size_t> pick_cluster(0, k_ - 1);
        const auto& mem = members_[pick_cluster(rng)];
        std::uniform_int_distribution<std::size_t> pick_member(0, mem.size() - 1);
        return mem[pick_member(rng)];
    }

    const Trajectory& sample_h(Rng& rng) const { return entries_[sample_h_index(rng)].trajectory; }

    std::vector<Trajectory> trajectories() const {
        std::vector<Trajectory> out;
        out.reserve(entries_.size());
        for (const auto& e : entries_) out.push_back(e.trajectory);
        return out;
    }

private:
    std::vector<BankEntry> entries_;
    std::vector<std::vector<std::size_t>> members_;
    std::size_t k_ = 0;
    std::size_t m_ = 0;
    double dt_ = 0.0;
};

struct ClusterOptions {
    std::size_t k = 64;
    ClusterMethod method = ClusterMethod::minibatch_kmeans;
    std::uint64_t seed = 0;
    std::size_t max_iters = 100;     // full_kmeans
    std::size_t batch_size = 1024;   // minibatch_kmeans
    std::size_t n_batches = 200;     // minibatch_kmeans
};

inline TrajectoryBank build_bank(const Dataset& dataset, const ClusterOptions& opt) {
    if (dataset.examples.empty()) throw ArgumentError("dataset is empty");
    std::vector<Trajectory> trajs;
    trajs.reserve(dataset.examples.size());
    for (const auto& ex : dataset.examples) trajs.push_back(ex.ground_truth);

    std::vector<std::uint32_t> assign(trajs.size(), 0);
    std::size_t k = 1;
    if (opt.method != ClusterMethod::none) {
        const Matrix data = stack_trajectories(trajs);
        const auto result = opt.method == ClusterMethod::full_kmeans
                                ? kmeans_full(data, opt.k, opt.max_iters, opt.seed)
                                : kmeans_minibatch(data, opt.k, opt.batch_size, opt.n_batches, opt.seed);
        assign = result.assignments;
        k = opt.k;
    }
    std::vector<BankEntry> entries;
    entries.reserve(trajs.size());
    for (std::size_t i = 0; i < trajs.size(); ++i)
        entries.push_back({dataset.examples[i].id, std::move(trajs[i]), assign[i]});
    return TrajectoryBank(std::move(entries), k, dataset.header.M, dataset.header.dt);
}

inline void save_bank(const std::string& path, const TrajectoryBank& bank) {
    auto out = detail::open_output(path);
    nlohmann::json header = {{"M", bank.M()},
                             {"dt", bank.dt()},
                             {"K", bank.num_clusters()},
                             {"n", bank.size()},
                             {"version", kBankVersion}};
    out << header.dump() << '\n';
    for (const auto& e : bank.entries()) {
        nlohmann::json rec;
        rec["id"] = e.id;
        rec["cluster"] = e.cluster;
        rec["traj"] = detail::trajectory_to_json(e.trajectory);
        out << rec.dump() << '\n';
    }
    if (!out) throw ArgumentError("write failed: " + path);
}

inline TrajectoryBank load_bank(const std::string& path) {
    auto in = detail::open_input(path);
    std::string text;
    std::size_t line = 0;
    std::size_t m = 0, k = 0, n = 0;
    double dt = 0.0;
    bool have_header = false;
    std::vector<BankEntry> entries;
    while (std::getline(in, text)) {
        ++line;
        if (text.empty()) continue;
        auto j = detail::parse_line(text, line);
        if (!have_header) {
            m = detail::required<std::size_t>(j, "M", line);
            dt = detail::required<double>(j, "dt", line);
            k = detail::required<std::size_t>(j, "K", line);
            n = detail::required<std::size_t>(j, "n", line);
            if (detail::required<int>(j, "version", line) != kBankVersion)
                throw ParseError("unsupported bank version", line);
            have_header = true;
            continue;
        }
        BankEntry e;
        e.id = detail::required<std::string>(j, "id", line);
        e.cluster = detail::required<std::uint32_t>(j, "cluster", line);
        if (!j.contains("traj")) throw ParseError("missing field 'traj'", line);
        e.trajectory = detail::trajectory_from_json(j["traj"], m, line);
        entries.push_back(std::move(e));
    }
    if (!have_header) throw ParseError("missing header record", 1);
    if (entries.size() != n)
        throw ParseError("header declares " + std::to_string(n) + " entries, found " +
                         std::to_string(entries.size()));
    try {
        return TrajectoryBank(std::move(entries), k, m, dt);
    } catch (const ParseError&) {
        throw;
    } catch (const Error& e) {
        throw ParseError(e.what());
    }
}

}  // namespace prank

#endif  // PRANK_BANK_HPP

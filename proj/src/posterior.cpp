#include "spinbath/posterior.hpp"

#include "spinbath/detection.hpp"
#include "spinbath/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

namespace spinbath {

double Coupling::magnitude() const { return std::hypot(a_par, a_perp); }

std::vector<Coupling> couplings_of(SpinConfiguration const& config, SiteTable const& table) {
    std::vector<Coupling> out;
    out.reserve(config.k());
    for (SiteIndex s : config.occupied)
        out.push_back({table.a_par(s), table.a_perp(s)});
    return out;
}

namespace {

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

} // namespace

SpinConfiguration modal_configuration(PosteriorEnsemble const& posterior) {
    if (posterior.samples.empty())
        throw DomainError("modal_configuration: empty posterior");

    struct Group {
        std::size_t count = 0;
        double ll_sum = 0;
        std::vector<std::size_t> members;
    };
    std::map<std::vector<SiteIndex>, Group> groups;
    for (std::size_t i = 0; i < posterior.samples.size(); ++i) {
        auto const& sample = posterior.samples[i];
        auto& g = groups[sample.config.occupied];
        ++g.count;
        g.ll_sum += sample.log_likelihood;
        g.members.push_back(i);
    }

    // std::map iterates in lexicographic order, so strict comparisons keep the
    // lexicographically smallest set among exact ties.
    auto best = groups.begin();
    for (auto it = std::next(groups.begin()); it != groups.end(); ++it) {
        auto const& g = it->second;
        auto const& b = best->second;
        if (g.count > b.count ||
            (g.count == b.count && g.ll_sum / static_cast<double>(g.count) > b.ll_sum / static_cast<double>(b.count)))
            best = it;
    }

    SpinConfiguration modal;
    modal.occupied = best->first;
    std::vector<double> lambdas;
    for (std::size_t i : best->second.members)
        lambdas.push_back(posterior.samples[i].config.lambda);
    modal.lambda = median(lambdas);
    std::size_t const n_dataset_lambdas = posterior.samples[best->second.members.front()].config.dataset_lambdas.size();
    for (std::size_t d = 0; d < n_dataset_lambdas; ++d) {
        lambdas.clear();
        for (std::size_t i : best->second.members)
            lambdas.push_back(posterior.samples[i].config.dataset_lambdas[d]);
        modal.dataset_lambdas.push_back(median(lambdas));
    }
    return modal;
}

Matching match_spins(std::span<Coupling const> candidate, std::span<Coupling const> truth, MatchRule rule) {
    std::vector<std::tuple<double, std::size_t, std::size_t>> edges; // (distance, candidate, truth)
    for (std::size_t c = 0; c < candidate.size(); ++c)
        for (std::size_t t = 0; t < truth.size(); ++t) {
            double const d = std::hypot(candidate[c].a_par - truth[t].a_par, candidate[c].a_perp - truth[t].a_perp);
            double const tol = std::max(rule.relative * truth[t].magnitude(), rule.absolute);
            if (d <= tol)
                edges.emplace_back(d, c, t);
        }
    std::sort(edges.begin(), edges.end());

    Matching m;
    std::vector<bool> c_used(candidate.size(), false), t_used(truth.size(), false);
    for (auto const& [d, c, t] : edges) {
        if (c_used[c] || t_used[t])
            continue;
        c_used[c] = t_used[t] = true;
        m.pairs.emplace_back(c, t);
    }
    for (std::size_t t = 0; t < truth.size(); ++t)
        if (!t_used[t])
            m.misses.push_back(t);
    for (std::size_t c = 0; c < candidate.size(); ++c)
        if (!c_used[c])
            m.extras.push_back(c);
    return m;
}

std::vector<double> default_magnitude_bins() { return {0.0, 25.0, 100.0, 200.0}; }

std::size_t bin_of(double magnitude, std::span<double const> edges) {
    auto it = std::upper_bound(edges.begin(), edges.end(), magnitude);
    if (it == edges.begin())
        return 0;
    return static_cast<std::size_t>(std::distance(edges.begin(), it)) - 1;
}

RecoveryReport summarize_posterior(PosteriorEnsemble const& posterior, SiteTable const& table,
                                   std::vector<double> bins) {
    if (bins.empty() || !std::is_sorted(bins.begin(), bins.end()))
        throw DomainError("magnitude bins must be non-empty and ascending");
    RecoveryReport report;
    report.modal_config = modal_configuration(posterior);
    report.bin_edges = std::move(bins);

    double const n = static_cast<double>(posterior.samples.size());
    std::map<std::size_t, std::size_t> k_counts;
    std::vector<std::size_t> bin_counts(report.bin_edges.size(), 0);
    std::size_t total_spins = 0;
    for (auto const& s : posterior.samples) {
        ++k_counts[s.config.k()];
        for (SiteIndex site : s.config.occupied) {
            ++bin_counts[bin_of(table.magnitude(site), report.bin_edges)];
            ++total_spins;
        }
    }
    std::size_t best_count = 0;
    for (auto const& [k, c] : k_counts) {
        report.k_histogram[k] = static_cast<double>(c) / n;
        if (c > best_count) {
            best_count = c;
            report.modal_k = k;
        }
    }
    report.hyperfine_hist.assign(report.bin_edges.size(), 0.0);
    if (total_spins > 0)
        for (std::size_t b = 0; b < bin_counts.size(); ++b)
            report.hyperfine_hist[b] = static_cast<double>(bin_counts[b]) / static_cast<double>(total_spins);
    report.modal_k_disagrees = report.modal_k != report.modal_config.k();
    return report;
}

RecoveryReport recovery_metrics(PosteriorEnsemble const& posterior, SiteTable const& table,
                                std::span<Coupling const> truth, std::vector<double> bins, MatchRule rule) {
    RecoveryReport report = summarize_posterior(posterior, table, std::move(bins));
    report.truth.assign(truth.begin(), truth.end());
    std::size_t const n_bins = report.bin_edges.size();

    std::vector<std::size_t> hits(truth.size(), 0);
    for (auto const& s : posterior.samples) {
        auto const cand = couplings_of(s.config, table);
        for (auto const& [c, t] : match_spins(cand, truth, rule).pairs)
            ++hits[t];
    }
    double const n = static_cast<double>(posterior.samples.size());
    for (std::size_t t = 0; t < truth.size(); ++t)
        report.detection_rate.push_back(static_cast<double>(hits[t]) / n);

    auto const modal = couplings_of(report.modal_config, table);
    auto const modal_match = match_spins(modal, truth, rule);
    report.k_discrepancy = static_cast<long>(modal.size()) - static_cast<long>(truth.size());
    report.false_positive_rate =
        modal.empty() ? 0.0 : static_cast<double>(modal_match.extras.size()) / static_cast<double>(modal.size());

    double const nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> rate_sum(n_bins, 0.0);
    report.truth_count_by_bin.assign(n_bins, 0);
    report.k_discrepancy_by_bin.assign(n_bins, 0);
    std::vector<std::size_t> modal_in_bin(n_bins, 0), extras_in_bin(n_bins, 0);
    for (std::size_t t = 0; t < truth.size(); ++t) {
        auto const b = bin_of(truth[t].magnitude(), report.bin_edges);
        ++report.truth_count_by_bin[b];
        rate_sum[b] += report.detection_rate[t];
        --report.k_discrepancy_by_bin[b];
    }
    for (auto const& c : modal) {
        auto const b = bin_of(c.magnitude(), report.bin_edges);
        ++modal_in_bin[b];
        ++report.k_discrepancy_by_bin[b];
    }
    for (std::size_t c : modal_match.extras)
        ++extras_in_bin[bin_of(modal[c].magnitude(), report.bin_edges)];
    for (std::size_t b = 0; b < n_bins; ++b) {
        report.detection_by_bin.push_back(report.truth_count_by_bin[b] ? rate_sum[b] / report.truth_count_by_bin[b]
                                                                       : nan);
        report.false_positive_by_bin.push_back(
            modal_in_bin[b] ? static_cast<double>(extras_in_bin[b]) / static_cast<double>(modal_in_bin[b]) : nan);
    }
    return report;
}

std::vector<Overlay> reconstruct_overlay(PosteriorEnsemble const& posterior, SiteTable const& table,
                                         std::span<PulseProtocol const> protocols, std::size_t max_band_samples) {
    if (posterior.samples.empty())
        throw DomainError("reconstruct_overlay: empty posterior");
    auto const modal = modal_configuration(posterior);

    std::size_t const n = posterior.samples.size();
    std::size_t const m = std::max<std::size_t>(1, std::min(max_band_samples, n));
    std::vector<std::size_t> picks;
    for (std::size_t i = 0; i < m; ++i)
        picks.push_back(i * n / m);

    std::vector<Overlay> overlays;
    for (std::size_t d = 0; d < protocols.size(); ++d) {
        auto const& protocol = protocols[d];
        auto with_lambda = [&](SpinConfiguration c) {
            c.lambda = c.lambda_for(d);
            c.dataset_lambdas.clear();
            return c;
        };
        Overlay overlay;
        overlay.modal = coherence(with_lambda(modal), table, protocol);

        std::size_t const points = protocol.tau_grid.size();
        std::vector<std::vector<double>> columns(points);
        for (std::size_t i : picks) {
            auto const curve = coherence(with_lambda(posterior.samples[i].config), table, protocol);
            for (std::size_t j = 0; j < points; ++j)
                columns[j].push_back(curve.values[j]);
        }
        for (std::size_t j = 0; j < points; ++j) {
            overlay.lower.push_back(quantile(columns[j], 0.05));
            overlay.upper.push_back(quantile(columns[j], 0.95));
        }
        overlays.push_back(std::move(overlay));
    }
    return overlays;
}

std::vector<SiteIndex> strong_spins(SpinConfiguration const& config, SiteTable const& table, double min_magnitude) {
    std::vector<SiteIndex> out;
    for (SiteIndex s : config.occupied)
        if (table.magnitude(s) > min_magnitude)
            out.push_back(s);
    return out;
}

} // namespace spinbath

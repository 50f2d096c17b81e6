// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedalt/federation.hpp"

namespace fedalt {

struct MetricsLogRow {
    std::uint64_t seed = 0;
    std::string strategy;
    int round = 0;
    int client = 0;
    std::string split;
    double loss = 0.0;
    double accuracy = 0.0;
};

inline const char* kMetricsHeader = "seed,strategy,round,client,split,loss,accuracy";
inline const char* kTraceHeader = "round,client,displacement,delta_max,train_loss,eval_metric";

namespace detail {
inline std::string fmt_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}
}  // namespace detail

inline std::string metrics_row_line(const MetricsLogRow& r) {
    std::ostringstream ss;
    ss << r.seed << ',' << r.strategy << ',' << r.round << ',' << r.client << ',' << r.split << ','
       << detail::fmt_double(r.loss) << ',' << detail::fmt_double(r.accuracy);
    return ss.str();
}

inline std::string trace_row_line(const TraceRow& r) {
    std::ostringstream ss;
    ss << r.round << ',' << r.client << ',' << detail::fmt_double(r.displacement) << ','
       << detail::fmt_double(r.delta_max) << ',' << detail::fmt_double(r.train_loss) << ','
       << detail::fmt_double(r.eval_metric);
    return ss.str();
}

/// Parses a metrics CSV. Complete data lines are required; the header may be
/// followed by any prefix of rows (the file stays parseable mid-append).
inline std::vector<MetricsLogRow> parse_metrics_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw Error("metrics csv: empty file");
    if (line != kMetricsHeader) throw Error("metrics csv: bad header '" + line + "'");
    std::vector<MetricsLogRow> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string field;
        MetricsLogRow r;
        auto next = [&](const char* what) {
            if (!std::getline(ls, field, ','))
                throw Error("metrics csv line " + std::to_string(line_no) + ": missing " + what);
            return field;
        };
        r.seed = std::stoull(next("seed"));
        r.strategy = next("strategy");
        r.round = std::stoi(next("round"));
        r.client = std::stoi(next("client"));
        r.split = next("split");
        r.loss = std::strtod(next("loss").c_str(), nullptr);
        r.accuracy = std::strtod(next("accuracy").c_str(), nullptr);
        rows.push_back(std::move(r));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// summary table (per-client columns plus an Average, one row per strategy)
// ---------------------------------------------------------------------------

struct SummaryRow {
    std::string strategy;
    std::string client;  // "0".."K-1" or "Average"
    double loss_mean = 0.0, loss_std = 0.0;
    double acc_mean = 0.0, acc_std = 0.0;
    int seeds = 0;
};

namespace detail {
struct RunningStat {
    std::vector<double> xs;
    void add(double v) { xs.push_back(v); }
    double mean() const {
        double m = 0.0;
        for (double v : xs) m += v;
        return xs.empty() ? 0.0 : m / xs.size();
    }
    double stddev() const {
        if (xs.size() < 2) return 0.0;
        const double m = mean();
        double acc = 0.0;
        for (double v : xs) acc += (v - m) * (v - m);
        return std::sqrt(acc / (xs.size() - 1));
    }
};
}  // namespace detail

/// Final-round eval metrics aggregated over seeds: one row per (strategy,
/// client) plus an Average row per strategy.
inline std::vector<SummaryRow> summarize_metrics(const std::vector<MetricsLogRow>& rows) {
    // final round = max round present per (seed, strategy)
    std::map<std::pair<std::uint64_t, std::string>, int> final_round;
    for (const auto& r : rows) {
        auto key = std::make_pair(r.seed, r.strategy);
        auto it = final_round.find(key);
        if (it == final_round.end() || r.round > it->second) final_round[key] = r.round;
    }
    std::map<std::pair<std::string, int>, detail::RunningStat> loss_stats, acc_stats;
    std::map<std::pair<std::string, std::uint64_t>, detail::RunningStat> seed_avg_loss, seed_avg_acc;
    std::map<std::string, std::set<std::uint64_t>> strat_seeds;
    int max_client = -1;
    for (const auto& r : rows) {
        if (r.split != "eval" || r.round != final_round[{r.seed, r.strategy}]) continue;
        loss_stats[{r.strategy, r.client}].add(r.loss);
        acc_stats[{r.strategy, r.client}].add(r.accuracy);
        seed_avg_loss[{r.strategy, r.seed}].add(r.loss);
        seed_avg_acc[{r.strategy, r.seed}].add(r.accuracy);
        strat_seeds[r.strategy].insert(r.seed);
        max_client = std::max(max_client, r.client);
    }
    std::vector<SummaryRow> out;
    for (const auto& [strategy, seeds] : strat_seeds) {
        for (int c = 0; c <= max_client; ++c) {
            auto it = acc_stats.find({strategy, c});
            if (it == acc_stats.end()) continue;
            SummaryRow s;
            s.strategy = strategy;
            s.client = std::to_string(c);
            s.loss_mean = loss_stats[{strategy, c}].mean();
            s.loss_std = loss_stats[{strategy, c}].stddev();
            s.acc_mean = it->second.mean();
            s.acc_std = it->second.stddev();
            s.seeds = static_cast<int>(seeds.size());
            out.push_back(std::move(s));
        }
        SummaryRow avg;
        avg.strategy = strategy;
        avg.client = "Average";
        detail::RunningStat al, aa;
        for (std::uint64_t seed : seeds) {
            al.add(seed_avg_loss[{strategy, seed}].mean());
            aa.add(seed_avg_acc[{strategy, seed}].mean());
        }
        avg.loss_mean = al.mean();
        avg.loss_std = al.stddev();
        avg.acc_mean = aa.mean();
        avg.acc_std = aa.stddev();
        avg.seeds = static_cast<int>(seeds.size());
        out.push_back(std::move(avg));
    }
    return out;
}

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
    std::ostringstream ss;
    ss << "strategy,client,seeds,loss_mean,loss_std,accuracy_mean,accuracy_std\n";
    for (const auto& r : rows)
        ss << r.strategy << ',' << r.client << ',' << r.seeds << ',' << detail::fmt_double(r.loss_mean)
           << ',' << detail::fmt_double(r.loss_std) << ',' << detail::fmt_double(r.acc_mean) << ','
           << detail::fmt_double(r.acc_std) << '\n';
    return ss.str();
}

/// Grid view: strategies as rows, clients as columns, Average last.
inline std::string summary_table(const std::vector<SummaryRow>& rows) {
    std::map<std::string, std::map<std::string, const SummaryRow*>> grid;
    std::set<std::string> clients;
    for (const auto& r : rows) {
        grid[r.strategy][r.client] = &r;
        if (r.client != "Average") clients.insert(r.client);
    }
    std::vector<std::string> cols(clients.begin(), clients.end());
    std::sort(cols.begin(), cols.end(), [](const std::string& a, const std::string& b) {
        return std::stoi(a) < std::stoi(b);
    });
    cols.push_back("Average");
    std::ostringstream ss;
    ss << std::left << std::setw(14) << "strategy";
    for (const auto& c : cols) {
        const std::string label = c == "Average" ? c : "c" + c;
        ss << std::right << std::setw(10) << label;
    }
    ss << '\n';
    for (const auto& [strategy, by_client] : grid) {
        ss << std::left << std::setw(14) << strategy;
        for (const auto& c : cols) {
            auto it = by_client.find(c);
            if (it == by_client.end()) {
                ss << std::right << std::setw(10) << "-";
            } else {
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%.4f", it->second->acc_mean);
                ss << std::right << std::setw(10) << buf;
            }
        }
        ss << '\n';
    }
    return ss.str();
}

// ---------------------------------------------------------------------------
// paired strategy comparison
// ---------------------------------------------------------------------------

/// One-sided sign test: probability of at least `wins` successes in
/// `wins + losses` fair coin flips. Ties are dropped, as usual.
inline double sign_test_p(int wins, int losses) {
    const int n = wins + losses;
    if (n == 0) return 1.0;
    double p = 0.0;
    for (int i = wins; i <= n; ++i) {
        double c = 1.0;
        for (int j = 0; j < i; ++j) c = c * (n - j) / (j + 1);
        p += c;
    }
    return p * std::pow(0.5, n);
}

struct StrategyRunData {
    std::string strategy;
    nlohmann::json data_fingerprint;  // the config fields that determine the datasets
    std::map<std::uint64_t, double> final_eval_acc;  // per seed, mean over clients
};

inline StrategyRunData strategy_run_data(const std::vector<MetricsLogRow>& rows,
                                         const nlohmann::json& fingerprint) {
    StrategyRunData d;
    d.data_fingerprint = fingerprint;
    std::map<std::uint64_t, int> final_round;
    for (const auto& r : rows) {
        if (d.strategy.empty()) d.strategy = r.strategy;
        auto it = final_round.find(r.seed);
        if (it == final_round.end() || r.round > it->second) final_round[r.seed] = r.round;
    }
    std::map<std::uint64_t, detail::RunningStat> stats;
    for (const auto& r : rows)
        if (r.split == "eval" && r.round == final_round[r.seed]) stats[r.seed].add(r.accuracy);
    for (auto& [seed, st] : stats) d.final_eval_acc[seed] = st.mean();
    return d;
}

struct PairComparison {
    std::string reference, other;
    std::vector<std::uint64_t> seeds;
    std::vector<double> diffs;  // reference - other, per shared seed
    std::vector<std::uint64_t> missing;  // seeds present in one run only
    double mean_diff = 0.0;
    int wins = 0, losses = 0, ties = 0;
    double p_ref_better = 1.0;   // sign test against "reference not better"
    double p_other_better = 1.0;
};

struct CompareReport {
    std::vector<PairComparison> pairs;
    std::string text;
};

/// Pairwise comparison of the first run against each other run over shared
/// seeds. Runs must have been produced from the same data configuration.
inline CompareReport compare_strategies(const std::vector<StrategyRunData>& runs) {
    if (runs.size() < 2) throw Error("compare_strategies: need at least 2 runs");
    for (std::size_t i = 1; i < runs.size(); ++i)
        if (runs[i].data_fingerprint != runs[0].data_fingerprint)
            throw Error("compare_strategies: run '" + runs[i].strategy +
                        "' was produced from a different data configuration than '" + runs[0].strategy + "'");
    CompareReport report;
    std::ostringstream text;
    text << "reference strategy: " << runs[0].strategy << "\n";
    for (std::size_t i = 1; i < runs.size(); ++i) {
        PairComparison pc;
        pc.reference = runs[0].strategy;
        pc.other = runs[i].strategy;
        for (const auto& [seed, acc] : runs[0].final_eval_acc) {
            auto it = runs[i].final_eval_acc.find(seed);
            if (it == runs[i].final_eval_acc.end()) {
                pc.missing.push_back(seed);
                continue;
            }
            pc.seeds.push_back(seed);
            pc.diffs.push_back(acc - it->second);
        }
        for (const auto& [seed, acc] : runs[i].final_eval_acc)
            if (!runs[0].final_eval_acc.count(seed)) pc.missing.push_back(seed);
        for (double d : pc.diffs) {
            pc.mean_diff += d;
            if (d > 0) ++pc.wins;
            else if (d < 0) ++pc.losses;
            else ++pc.ties;
        }
        if (!pc.diffs.empty()) pc.mean_diff /= pc.diffs.size();
        pc.p_ref_better = sign_test_p(pc.wins, pc.losses);
        pc.p_other_better = sign_test_p(pc.losses, pc.wins);
        text << pc.reference << " vs " << pc.other << ": seeds [";
        for (std::size_t s = 0; s < pc.seeds.size(); ++s) text << (s ? " " : "") << pc.seeds[s];
        text << "], mean diff " << detail::fmt_double(pc.mean_diff) << ", wins/losses/ties " << pc.wins
             << "/" << pc.losses << "/" << pc.ties << ", sign-test p(ref better) "
             << detail::fmt_double(pc.p_ref_better) << ", p(other better) "
             << detail::fmt_double(pc.p_other_better);
        if (!pc.missing.empty()) {
            text << ", MISSING PAIR for seeds [";
            for (std::size_t s = 0; s < pc.missing.size(); ++s) text << (s ? " " : "") << pc.missing[s];
            text << "]";
        }
        text << "\n";
        report.pairs.push_back(std::move(pc));
    }
    report.text = text.str();
    return report;
}

}  // namespace fedalt

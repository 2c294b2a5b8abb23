#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "mdpo/config.hpp"
#include "mdpo/errors.hpp"
#include "mdpo/evaluation.hpp"

namespace mdpo {

struct MetricsRow {
    std::string algo;
    std::string env;
    std::uint64_t seed = 0;
    std::size_t env_step = 0;
    double eval_return_mean = 0.0;
    double eval_return_std = 0.0;
    double wall_ms = 0.0;

    bool operator==(const MetricsRow&) const = default;
};

struct AggregateRow {
    std::string algo;
    std::string env;
    std::size_t env_step = 0;
    double mean = 0.0;
    double ci_half_width = 0.0;  // 1.96 s / sqrt(n), s with the n - 1 denominator
    std::size_t n_seeds = 0;
};

inline constexpr double kZ95 = 1.96;

/// Mean and 95% half-width over per-seed values.
inline std::pair<double, double> mean_ci(const std::vector<double>& xs) {
    const auto stats = sample_stats(xs);
    const double half = xs.size() < 2 ? 0.0 : kZ95 * stats.std / std::sqrt(static_cast<double>(xs.size()));
    return {stats.mean, half};
}

/// Groups rows by (algo, env, env_step), in sorted key order.
inline std::vector<AggregateRow> aggregate(const std::vector<MetricsRow>& rows) {
    std::map<std::tuple<std::string, std::string, std::size_t>, std::vector<double>> groups;
    for (const auto& r : rows) groups[{r.algo, r.env, r.env_step}].push_back(r.eval_return_mean);
    std::vector<AggregateRow> out;
    out.reserve(groups.size());
    for (const auto& [key, xs] : groups) {
        const auto [mean, half] = mean_ci(xs);
        out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), mean, half, xs.size()});
    }
    return out;
}

namespace csv {

inline std::string quote(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char ch : field) {
        if (ch == '"') out += '"';
        out += ch;
    }
    out += '"';
    return out;
}

inline std::string join(const std::vector<std::string>& fields) {
    std::string line;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) line += ',';
        line += quote(fields[i]);
    }
    return line + "\r\n";
}

/// Splits RFC 4180 text into records. Quoted fields may hold commas,
/// doubled quotes and line breaks.
inline std::vector<std::vector<std::string>> parse(std::string_view text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char ch = text[i];
        if (in_quotes) {
            if (ch == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field += ch;
            }
            continue;
        }
        if (ch == '"') {
            in_quotes = true;
            any = true;
        } else if (ch == ',') {
            record.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (ch == '\r' || ch == '\n') {
            if (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            if (any || !field.empty()) {
                record.push_back(std::move(field));
                records.push_back(std::move(record));
            }
            record.clear();
            field.clear();
            any = false;
        } else {
            field += ch;
            any = true;
        }
    }
    if (in_quotes) throw BadValue("csv: unterminated quoted field");
    if (any || !field.empty()) {
        record.push_back(std::move(field));
        records.push_back(std::move(record));
    }
    return records;
}

}  // namespace csv

inline const std::vector<std::string>& metrics_header() {
    static const std::vector<std::string> h{"algo", "env", "seed", "env_step", "eval_return_mean",
                                            "eval_return_std", "wall_ms"};
    return h;
}

inline const std::vector<std::string>& aggregate_header() {
    static const std::vector<std::string> h{"algo", "env", "env_step", "mean", "ci_half_width",
                                            "n_seeds"};
    return h;
}

inline std::string metrics_csv(const std::vector<MetricsRow>& rows, bool with_header = true) {
    using detail::format_double;
    std::string out = with_header ? csv::join(metrics_header()) : std::string();
    for (const auto& r : rows)
        out += csv::join({r.algo, r.env, std::to_string(r.seed), std::to_string(r.env_step),
                          format_double(r.eval_return_mean), format_double(r.eval_return_std),
                          format_double(r.wall_ms)});
    return out;
}

inline std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
    using detail::format_double;
    std::string out = csv::join(aggregate_header());
    for (const auto& r : rows)
        out += csv::join({r.algo, r.env, std::to_string(r.env_step), format_double(r.mean),
                          format_double(r.ci_half_width), std::to_string(r.n_seeds)});
    return out;
}

namespace detail {

inline void check_header(const std::vector<std::vector<std::string>>& records,
                         const std::vector<std::string>& header, const char* what) {
    if (records.empty() || records.front() != header)
        throw BadValue(std::string(what) + ": missing or unexpected header");
    for (std::size_t i = 1; i < records.size(); ++i)
        if (records[i].size() != header.size())
            throw BadValue(std::string(what) + ": row " + std::to_string(i) + " has " +
                           std::to_string(records[i].size()) + " fields");
}

}  // namespace detail

inline std::vector<MetricsRow> parse_metrics_csv(std::string_view text) {
    const auto records = csv::parse(text);
    detail::check_header(records, metrics_header(), "metrics.csv");
    std::vector<MetricsRow> rows;
    for (std::size_t i = 1; i < records.size(); ++i) {
        const auto& f = records[i];
        rows.push_back({f[0], f[1], detail::parse_uint("seed", f[2]),
                        static_cast<std::size_t>(detail::parse_uint("env_step", f[3])),
                        detail::parse_double("eval_return_mean", f[4]),
                        detail::parse_double("eval_return_std", f[5]),
                        detail::parse_double("wall_ms", f[6])});
    }
    return rows;
}

inline std::vector<AggregateRow> parse_aggregate_csv(std::string_view text) {
    const auto records = csv::parse(text);
    detail::check_header(records, aggregate_header(), "aggregate.csv");
    std::vector<AggregateRow> rows;
    for (std::size_t i = 1; i < records.size(); ++i) {
        const auto& f = records[i];
        rows.push_back({f[0], f[1], static_cast<std::size_t>(detail::parse_uint("env_step", f[2])),
                        detail::parse_double("mean", f[3]),
                        detail::parse_double("ci_half_width", f[4]),
                        static_cast<std::size_t>(detail::parse_uint("n_seeds", f[5]))});
    }
    return rows;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << content;
    if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace mdpo

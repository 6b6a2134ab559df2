// Tables and reliability CSVs rebuilt from trace files.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "secl/harness.hpp"

namespace secl {

namespace {

struct LoadedTrace {
  std::string label;
  std::string method;
  std::vector<ScoredPrediction> scored;
  bool has_gate = false;
  long trained = 0;
  int alarms = 0;
  double fwd_eq = 0.0;
};

LoadedTrace load_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open trace " + path.string());
  LoadedTrace t;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    ojson row;
    try {
      row = ojson::parse(line);
    } catch (const ojson::parse_error&) {
      throw DataError(where + "not valid JSON");
    }
    try {
      const int version = row.at("schema_version").get<int>();
      if (version != kSchemaVersion) {
        throw DataError(where + "schema_version " + std::to_string(version) + ", expected " +
                        std::to_string(kSchemaVersion));
      }
      const std::string method = row.at("method").get<std::string>();
      if (t.method.empty()) t.method = method;
      if (method != t.method) throw DataError(where + "trace mixes methods");
      t.scored.push_back({row.at("score").get<double>(), row.at("correct").get<bool>(),
                          row.at("domain").get<std::string>()});
      if (row.at("trained").get<bool>()) ++t.trained;
      if (const auto& g = row.at("gate"); !g.is_null()) {
        t.has_gate = true;
        t.alarms = std::max(t.alarms, g.at("triggers").get<int>());
      }
      t.fwd_eq += row.at("fwd_eq").get<double>();
    } catch (const ojson::exception& e) {
      throw DataError(where + "bad trace row: " + e.what());
    }
  }
  if (t.scored.empty()) throw DataError(path.string() + ": trace is empty");
  return t;
}

std::string fmt(const char* f, double v) {
  if (std::isnan(v)) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

} // namespace

TraceReport report_traces(const std::vector<std::filesystem::path>& traces, int bins) {
  if (traces.empty()) throw DataError("no traces given");
  std::vector<LoadedTrace> loaded;
  std::map<std::string, int> label_uses;
  for (const auto& path : traces) {
    auto t = load_trace(path);
    const int use = label_uses[t.method]++;
    t.label = use == 0 ? t.method : t.method + "_" + std::to_string(use + 1);
    loaded.push_back(std::move(t));
  }

  TraceReport report;
  report.summary = ojson::array();
  std::string text;
  char line[256];
  std::snprintf(line, sizeof(line), "%-16s %6s %7s %7s %7s %7s %7s %13s %9s %9s\n", "trace", "n", "acc", "ece", "adaece",
                "brier", "auroc", "conf range", "trained%", "fwd_eq");
  text += line;

  std::set<std::string> domains;
  std::vector<MetricSummary> summaries;
  for (const auto& t : loaded) {
    const auto s = summarize(t.scored, bins);
    const auto& o = s.overall;
    const double n = static_cast<double>(o.n);
    const std::string trained = t.has_gate ? fmt("%.1f", 100.0 * static_cast<double>(t.trained) / n) : "-";
    std::snprintf(line, sizeof(line), "%-16s %6zu %7.3f %7.3f %7s %7.3f %7s   [%.2f,%.2f] %9s %9.0f\n",
                  t.label.c_str(), o.n, o.accuracy, o.ece, fmt("%.3f", o.ada_ece.value_or(NAN)).c_str(), o.brier,
                  fmt("%.3f", o.auroc.value_or(NAN)).c_str(), o.conf_min, o.conf_max, trained.c_str(), t.fwd_eq);
    text += line;

    ojson entry;
    entry["trace"] = t.label;
    entry["method"] = t.method;
    entry["overall"] = to_json(o);
    ojson per_domain;
    for (const auto& [d, b] : s.per_domain) {
      per_domain[d] = to_json(b);
      domains.insert(d);
    }
    entry["per_domain"] = per_domain;
    if (t.has_gate) {
      entry["triggers"] = {{"trained", t.trained},
                           {"skipped", static_cast<long>(o.n) - t.trained},
                           {"trained_pct", 100.0 * static_cast<double>(t.trained) / n},
                           {"alarms", t.alarms}};
    }
    entry["fwd_eq_total"] = t.fwd_eq;
    report.summary.push_back(entry);
    report.csv_files.emplace_back("reliability_" + t.label + ".csv", reliability_csv(o.reliability));
    summaries.push_back(s);
  }

  if (domains.size() > 1) {
    text += "\nper-domain ECE\n";
    std::snprintf(line, sizeof(line), "%-16s", "trace");
    text += line;
    for (const auto& d : domains) {
      std::snprintf(line, sizeof(line), " %11s", d.c_str());
      text += line;
    }
    text += "\n";
    for (std::size_t i = 0; i < loaded.size(); ++i) {
      std::snprintf(line, sizeof(line), "%-16s", loaded[i].label.c_str());
      text += line;
      for (const auto& d : domains) {
        auto it = summaries[i].per_domain.find(d);
        std::snprintf(line, sizeof(line), " %11s", it == summaries[i].per_domain.end() ? "-" : fmt("%.3f", it->second.ece).c_str());
        text += line;
      }
      text += "\n";
    }
  }
  report.text = text;
  return report;
}

} // namespace secl

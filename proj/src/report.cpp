#include "synmrc/report.hpp"

#include <cstdio>

#include "json.hpp"

namespace synmrc {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string fixed(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", value);
  return buf;
}

std::string threshold_text(double t) {
  if (std::isinf(t)) return t > 0 ? "+inf" : "-inf";
  return fixed(t);
}

// Labels and ids never contain commas or quotes, so no CSV quoting is needed.
std::string row(std::initializer_list<std::string> cells) {
  std::string out;
  for (const auto& c : cells) {
    if (!out.empty()) out += ',';
    out += c;
  }
  return out + "\n";
}

ordered_json mean_std_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}}; }

}  // namespace

std::string table_csv(const ComparisonReport& report) {
  std::string out = row({"condition", "split", "seed", "overall_f1", "answerable_f1", "unanswerable_accuracy",
                         "threshold", "n_examples", "overall_f1_std", "answerable_f1_std", "unanswerable_accuracy_std"});
  for (const auto& c : report.conditions) {
    for (const auto& split : report.splits) {
      for (const auto& s : report.seed_reports(c.condition, split)) {
        const auto& m = s.metrics;
        out += row({c.condition, split, std::to_string(s.seed), fixed(m.overall_f1), fixed(m.answerable_f1),
                    fixed(m.unanswerable_accuracy), threshold_text(m.threshold), std::to_string(m.n_examples), "", "",
                    ""});
      }
      const auto a = report.aggregate(c.condition, split);
      out += row({c.condition, split, "aggregate", fixed(a.overall_f1.mean), fixed(a.answerable_f1.mean),
                  fixed(a.unanswerable_accuracy.mean), "", "", fixed(a.overall_f1.std), fixed(a.answerable_f1.std),
                  fixed(a.unanswerable_accuracy.std)});
    }
  }
  return out;
}

std::string verdicts_csv(const ComparisonReport& report) {
  std::string out = row({"verdict", "split", "lhs", "rhs", "mean_difference", "pooled_std", "sign", "exceeds_noise", "cites"});
  for (const auto& v : report.verdicts) {
    std::string cites;
    for (const auto& c : v.cites) cites += (cites.empty() ? "" : " ") + c;
    out += row({v.name, v.split, v.lhs, v.rhs, fixed(v.mean_difference), fixed(v.pooled_std), std::string(1, v.sign()),
                v.exceeds_noise() ? "yes" : "no", cites});
  }
  return out;
}

std::string series_csv(const ComparisonReport& report) {
  std::string out = row({"series", "split", "x", "condition", "mean_f1", "std_f1"});
  for (const auto& s : report.series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      char x[32];
      std::snprintf(x, sizeof x, "%g", s.x[i]);
      out += row({s.name, s.split, x, s.conditions[i], fixed(s.mean[i]), fixed(s.std[i])});
    }
  }
  return out;
}

std::string report_json(const ComparisonReport& report) {
  ordered_json j;
  j["experiment"] = report.experiment;
  j["seeds"] = report.seeds;
  j["splits"] = report.splits;
  auto& conditions = j["conditions"] = ordered_json::array();
  for (const auto& c : report.conditions) {
    ordered_json cj;
    cj["condition"] = c.condition;
    auto& ids = cj["run_ids"] = ordered_json::array();
    for (const auto& r : c.runs) ids.push_back(r.run_id);
    auto& aggregates = cj["aggregates"] = ordered_json::object();
    for (const auto& split : report.splits) {
      const auto a = report.aggregate(c.condition, split);
      aggregates[split] = {{"n_seeds", a.n_seeds},
                           {"overall_f1", mean_std_json(a.overall_f1)},
                           {"answerable_f1", mean_std_json(a.answerable_f1)},
                           {"unanswerable_accuracy", mean_std_json(a.unanswerable_accuracy)}};
    }
    conditions.push_back(std::move(cj));
  }
  auto& verdicts = j["verdicts"] = ordered_json::array();
  for (const auto& v : report.verdicts) {
    verdicts.push_back({{"name", v.name},
                        {"split", v.split},
                        {"lhs", v.lhs},
                        {"rhs", v.rhs},
                        {"mean_difference", v.mean_difference},
                        {"pooled_std", v.pooled_std},
                        {"sign", std::string(1, v.sign())},
                        {"cites", v.cites}});
  }
  auto& series = j["series"] = ordered_json::array();
  for (const auto& s : report.series) {
    series.push_back({{"name", s.name}, {"split", s.split}, {"x", s.x}, {"mean", s.mean}, {"std", s.std},
                      {"conditions", s.conditions}});
  }
  j["facts"] = report.facts;
  j["notes"] = report.notes;
  return j.dump(2) + "\n";
}

void emit_reports(const ComparisonReport& report, const std::filesystem::path& dir) {
  try {
    write_file(dir / "table.csv", table_csv(report));
    write_file(dir / "verdicts.csv", verdicts_csv(report));
    write_file(dir / "series.csv", series_csv(report));
    write_file(dir / "report.json", report_json(report));
  } catch (const std::filesystem::filesystem_error& e) {
    throw IoError(e.what());
  }
}

ComparisonReport load_report(const std::filesystem::path& dir, const std::filesystem::path& runs_dir) {
  const auto j = nlohmann::json::parse(read_file(dir / "report.json"));
  ComparisonReport r;
  r.experiment = j.at("experiment");
  r.seeds = j.at("seeds").get<std::vector<int>>();
  r.splits = j.at("splits").get<std::vector<std::string>>();
  for (const auto& cj : j.at("conditions")) {
    ConditionResult c{cj.at("condition"), {}};
    for (const auto& id : cj.at("run_ids")) c.runs.push_back(load_run_record(runs_dir / (id.get<std::string>() + ".json")));
    r.conditions.push_back(std::move(c));
  }
  for (const auto& vj : j.at("verdicts")) {
    Verdict v;
    v.name = vj.at("name");
    v.split = vj.at("split");
    v.lhs = vj.at("lhs");
    v.rhs = vj.at("rhs");
    v.mean_difference = vj.at("mean_difference");
    v.pooled_std = vj.at("pooled_std");
    v.cites = vj.at("cites").get<std::vector<std::string>>();
    r.verdicts.push_back(std::move(v));
  }
  for (const auto& sj : j.at("series")) {
    r.series.push_back({sj.at("name"), sj.at("split"), sj.at("x").get<std::vector<double>>(),
                        sj.at("mean").get<std::vector<double>>(), sj.at("std").get<std::vector<double>>(),
                        sj.at("conditions").get<std::vector<std::string>>()});
  }
  r.facts = j.at("facts").get<std::map<std::string, std::string>>();
  r.notes = j.at("notes").get<std::vector<std::string>>();
  return r;
}

}  // namespace synmrc

#include "tempscone/experiment.hpp"

#include <atomic>
#include <fstream>
#include <map>
#include <thread>

#include "tempscone/theory.hpp"

namespace tempscone {
namespace fs = std::filesystem;

std::vector<CellResult> run_cells(const ExperimentSpec& spec, int jobs) {
  std::vector<CellResult> cells;
  for (Method m : spec.methods) {
    for (std::uint64_t seed : spec.seeds) {
      CellResult c;
      c.method = m;
      c.seed = seed;
      cells.push_back(std::move(c));
    }
  }

  auto run_one = [&spec](CellResult& cell) {
    try {
      cell.records = run_stream(spec.run_config(cell.method, cell.seed));
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.ok = false;
      cell.error = e.what();
    }
  };

  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), cells.size());
  if (workers <= 1) {
    for (auto& c : cells) run_one(c);
    return cells;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < cells.size(); i = next++) run_one(cells[i]);
    });
  }
  for (auto& th : pool) th.join();
  return cells;
}

std::string long_csv(const std::vector<CellResult>& cells) {
  std::string out = "method,seed," + metrics_csv_header() + "\n";
  for (const auto& c : cells) {
    if (!c.ok) continue;
    const std::string prefix = to_string(c.method) + "," + std::to_string(c.seed) + ",";
    for (const auto& r : c.records) out += prefix + to_csv_row(r) + "\n";
  }
  return out;
}

std::string summary_csv(const std::vector<CellResult>& cells) {
  const auto& cols = metrics_csv_columns();
  std::string out = "method,t,num_seeds";
  for (std::size_t i = 1; i < cols.size(); ++i) out += "," + cols[i];
  out += "\n";

  // Keyed by first appearance of the method, then t.
  std::vector<Method> order;
  std::map<std::pair<std::size_t, int>, std::pair<int, std::vector<double>>> sums;
  for (const auto& c : cells) {
    if (!c.ok) continue;
    auto it = std::find(order.begin(), order.end(), c.method);
    const std::size_t mi = static_cast<std::size_t>(it - order.begin());
    if (it == order.end()) order.push_back(c.method);
    for (const auto& r : c.records) {
      auto& [count, acc] = sums[{mi, r.t}];
      const auto vals = metric_values(r);
      if (acc.empty()) acc.assign(vals.size(), 0.0);
      for (std::size_t i = 0; i < vals.size(); ++i) acc[i] += vals[i];
      ++count;
    }
  }
  for (const auto& [key, entry] : sums) {
    const auto& [count, acc] = entry;
    out += to_string(order[key.first]) + "," + std::to_string(key.second) + "," +
           std::to_string(count);
    for (double s : acc) out += "," + format_double(s / count);
    out += "\n";
  }
  return out;
}

std::string records_jsonl(const CellResult& cell) {
  std::string out;
  for (const auto& r : cell.records) {
    nlohmann::json j = to_json(r);
    j["method"] = to_string(cell.method);
    j["seed"] = cell.seed;
    out += j.dump() + "\n";
  }
  return out;
}

void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::vector<fs::path> write_outputs(const ExperimentSpec& spec,
                                    const std::vector<CellResult>& cells) {
  const fs::path dir(spec.output_dir);
  std::vector<fs::path> written;
  auto put = [&](const fs::path& p, const std::string& text) {
    write_atomic(p, text);
    written.push_back(p);
  };

  put(dir / "config.ini", serialize_config(spec));
  if (spec.emit != Emit::Json) {
    put(dir / "metrics.csv", long_csv(cells));
    put(dir / "summary.csv", summary_csv(cells));
  }
  if (spec.emit != Emit::Csv) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto& c = cells[i];
      if (!c.ok) continue;
      const std::string name = std::to_string(i) + "_" + to_string(c.method) + "_seed" +
                               std::to_string(c.seed) + ".jsonl";
      put(dir / "runs" / name, records_jsonl(c));
    }
  }
  return written;
}

bool run_theory_sweep(const fs::path& out_dir, std::uint64_t seed, std::string* table) {
  const auto results = theory::verify_theory(seed);
  const std::string csv = theory::to_csv(results);
  write_atomic(out_dir / "theory.csv", csv);
  if (table != nullptr) *table = csv;
  return std::all_of(results.begin(), results.end(),
                     [](const theory::PropertyResult& r) { return r.passed(); });
}

}  // namespace tempscone

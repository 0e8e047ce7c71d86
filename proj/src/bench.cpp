#include <hbt/bench.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>

#include <json.hpp>

#include <hbt/stack_thread.hpp>

namespace hbt::bench {

auto parse_output_format(std::string_view name) -> OutputFormat {
  if (name == "human") return OutputFormat::Human;
  if (name == "csv")   return OutputFormat::CSV;
  if (name == "json")  return OutputFormat::JSON;
  throw std::invalid_argument("unknown output format: " + std::string(name));
}

auto desk_spec(TreeKind kind) -> TreeSpec {
  TreeSpec s;
  s.kind = kind;
  switch (kind) {
  case TreeKind::Perfect:
    s.height = 22;
    break;
  case TreeKind::Random:
    s.count = 1'000'000;
    break;
  case TreeKind::Chains:
    s.height = 12;
    s.count = 30;
    s.path_len = 100'000;
    break;
  case TreeKind::Chain:
    s.count = 10'000'000;
    break;
  }
  return s;
}

auto expected_checksum(const Tree& tree, const TreeSpec& spec) -> std::int64_t {
  if (spec.values == ValueMode::AllOnes) {
    return static_cast<std::int64_t>(tree.node_count());
  }
  return oracle_sum(tree.root());
}

/*---------------------------------------------------------------------*/
/* Timing */

namespace {

using clock_type = std::chrono::steady_clock;

struct timed_sum {
  SumResult sum;
  double seconds;
};

auto timed(VariantId id, const Tree& tree, sched::WorkerPool* pool) -> timed_sum {
  auto body = [&] {
    auto start = clock_type::now();
    auto sum = run_on(id, tree, pool);
    auto stop = clock_type::now();
    return timed_sum{sum, std::chrono::duration<double>(stop - start).count()};
  };
  if (id == VariantId::V0_Recursive || id == VariantId::V3_SerialCPS || id == VariantId::V4_SerialDefunc) {
    return run_with_stack(recursive_stack_bytes, body);
  }
  return body();
}

auto median(std::vector<double> xs) -> double {
  std::sort(xs.begin(), xs.end());
  auto n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : (xs[n / 2 - 1] + xs[n / 2]) / 2;
}

auto check(VariantId id, const SumResult& got, std::int64_t expected) -> void {
  if (got.total != expected) {
    throw checksum_error(std::string(short_name(id)) + " returned " + std::to_string(got.total) +
                         ", expected " + std::to_string(expected));
  }
}

} // end namespace

auto measure(VariantId id, const Tree& tree, std::int64_t expected, const MeasureOptions& options) -> Measurement {
  expects(options.repetitions >= 1, "at least one timed repetition");
  std::unique_ptr<sched::WorkerPool> pool;
  if (is_parallel(id)) {
    pool = std::make_unique<sched::WorkerPool>(sched::PoolOptions{
      .workers = options.workers, .heartbeat = options.heartbeat, .seed = options.scheduler_seed});
  }
  for (unsigned i = 0; i < options.warmup; i++) {
    check(id, timed(id, tree, pool.get()).sum, expected);
  }
  Measurement m;
  m.checksum = expected;
  for (unsigned i = 0; i < options.repetitions; i++) {
    if (pool) {
      pool->reset_counters();
    }
    auto r = timed(id, tree, pool.get());
    check(id, r.sum, expected);
    m.seconds.push_back(r.seconds);
    m.counters.push_back(pool ? pool->counters() : sched::Counters{});
  }
  m.median_seconds = median(m.seconds);
  return m;
}

/*---------------------------------------------------------------------*/
/* Calibration */

auto heartbeat_sweep() -> std::vector<std::uint64_t> {
  std::vector<std::uint64_t> hs;
  for (std::uint64_t h = 16; h <= 4096; h *= 2) {
    hs.push_back(h);
  }
  return hs;
}

auto measure_profile(const Tree& tree, std::int64_t expected, unsigned repetitions, unsigned warmup) -> CalibrationProfile {
  CalibrationProfile p;
  MeasureOptions opts{.workers = 1, .repetitions = repetitions, .warmup = warmup};
  p.serial_seconds = measure(VariantId::V5_SerialIterative, tree, expected, opts).median_seconds;
  if (p.serial_seconds < calibration_floor_seconds) {
    std::ostringstream msg;
    msg << "input too small to calibrate: serial traversal takes " << p.serial_seconds * 1e3
        << " ms (< " << calibration_floor_seconds * 1e3 << " ms); use a larger input";
    throw calibration_error(msg.str());
  }
  for (auto h : heartbeat_sweep()) {
    opts.heartbeat = h;
    p.heartbeat_seconds.emplace_back(h, measure(VariantId::V6_Heartbeat, tree, expected, opts).median_seconds);
  }
  return p;
}

auto select_heartbeat(const CalibrationProfile& profile, double target_overhead) -> Calibration {
  if (! (target_overhead > 0)) {
    throw std::invalid_argument("target overhead must be positive");
  }
  expects(! profile.heartbeat_seconds.empty(), "empty calibration profile");
  Calibration c{profile.heartbeat_seconds.back().first, false, profile};
  auto bound = (1 + target_overhead) * profile.serial_seconds;
  for (auto [h, secs] : profile.heartbeat_seconds) {
    if (secs <= bound) {
      c.heartbeat = h;
      c.satisfied = true;
      break;
    }
  }
  return c;
}

auto calibrate_H(const Tree& tree, std::int64_t expected, double target_overhead,
                 unsigned repetitions, unsigned warmup) -> Calibration {
  if (! (target_overhead > 0)) {
    throw std::invalid_argument("target overhead must be positive");
  }
  return select_heartbeat(measure_profile(tree, expected, repetitions, warmup), target_overhead);
}

auto calibrate_H(const TreeSpec& spec, double target_overhead, unsigned repetitions) -> Calibration {
  auto tree = generate(spec);
  return calibrate_H(tree, expected_checksum(tree, spec), target_overhead, repetitions);
}

/*---------------------------------------------------------------------*/
/* Harness */

auto run_bench(const BenchConfig& cfg) -> std::vector<BenchResult> {
  expects(cfg.repetitions >= 1, "repetitions must be >= 1");
  auto warn = [&] (const std::string& msg) {
    if (cfg.warn) {
      cfg.warn(msg);
    }
  };
  auto label = cfg.input.empty() ? std::string(to_string(cfg.spec.kind)) : cfg.input;
  auto hw = std::thread::hardware_concurrency();
  for (auto w : cfg.workers) {
    expects(w >= 1, "worker counts must be >= 1");
    if (hw != 0 && w > hw) {
      warn(std::to_string(w) + " workers requested but only " + std::to_string(hw) + " hardware threads available");
    }
  }

  auto tree = generate(cfg.spec);
  auto expected = expected_checksum(tree, cfg.spec);

  std::uint64_t heartbeat = 0;
  if (cfg.heartbeat) {
    heartbeat = *cfg.heartbeat;
  } else {
    auto c = calibrate_H(tree, expected, cfg.target_overhead, cfg.repetitions, cfg.warmup);
    if (! c.satisfied) {
      warn("no heartbeat period met the overhead target; using H=" + std::to_string(c.heartbeat));
    }
    heartbeat = c.heartbeat;
  }

  MeasureOptions base{.workers = 1, .heartbeat = heartbeat, .repetitions = cfg.repetitions,
                      .warmup = cfg.warmup, .scheduler_seed = cfg.scheduler_seed};
  auto baseline = measure(VariantId::V5_SerialIterative, tree, expected, base);

  std::vector<BenchResult> out;
  for (auto id : cfg.variants) {
    std::vector<unsigned> counts = is_parallel(id) ? cfg.workers : std::vector<unsigned>{1};
    for (auto w : counts) {
      BenchResult r;
      r.input = label;
      r.variant = id;
      r.workers = w;
      r.heartbeat = heartbeat;
      r.baseline_seconds = baseline.median_seconds;
      if (auto why = refusal_reason(id, tree)) {
        r.note = *why;
        out.push_back(std::move(r));
        continue;
      }
      Measurement m;
      if (id == VariantId::V5_SerialIterative) {
        m = baseline;
      } else {
        auto opts = base;
        opts.workers = w;
        m = measure(id, tree, expected, opts);
      }
      r.median_seconds = m.median_seconds;
      r.speedup_vs_v5 = baseline.median_seconds / m.median_seconds;
      r.checksum = m.checksum;
      r.counters = m.counters.back();
      r.run_counters = std::move(m.counters);
      out.push_back(std::move(r));
    }
  }
  return out;
}

/*---------------------------------------------------------------------*/
/* Output */

namespace {

auto fixed(double x, int digits) -> std::string {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

auto cell_name(const BenchResult& r) -> std::string {
  return std::string(short_name(r.variant)) + "@" + std::to_string(r.workers);
}

auto emit_human(std::span<const BenchResult> results) -> std::string {
  std::vector<std::string> inputs;
  std::vector<std::string> columns;
  std::map<std::pair<std::string, std::string>, const BenchResult*> cells;
  std::map<std::string, double> serial;
  for (auto& r : results) {
    if (std::find(inputs.begin(), inputs.end(), r.input) == inputs.end()) {
      inputs.push_back(r.input);
    }
    auto c = cell_name(r);
    if (std::find(columns.begin(), columns.end(), c) == columns.end()) {
      columns.push_back(c);
    }
    cells[{r.input, c}] = &r;
    serial[r.input] = r.baseline_seconds;
  }
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header = {"input", "serial (s)"};
  header.insert(header.end(), columns.begin(), columns.end());
  rows.push_back(header);
  for (auto& in : inputs) {
    std::vector<std::string> row = {in, fixed(serial[in], 4)};
    for (auto& c : columns) {
      auto it = cells.find({in, c});
      if (it == cells.end()) {
        row.push_back("");
      } else if (it->second->refused()) {
        row.push_back("n/a");
      } else {
        row.push_back(fixed(*it->second->speedup_vs_v5, 2) + "x");
      }
    }
    rows.push_back(row);
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); i++) {
      width[i] = std::max(width[i], row[i].size());
    }
  }
  std::ostringstream out;
  for (std::size_t r = 0; r < rows.size(); r++) {
    for (std::size_t i = 0; i < rows[r].size(); i++) {
      if (i == 0) {
        out << std::left << std::setw(static_cast<int>(width[i])) << rows[r][i];
      } else {
        out << "  " << std::right << std::setw(static_cast<int>(width[i])) << rows[r][i];
      }
    }
    out << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : width) {
        total += w + 2;
      }
      out << std::string(total - 2, '-') << '\n';
    }
  }
  return out.str();
}

auto emit_csv(std::span<const BenchResult> results) -> std::string {
  std::ostringstream out;
  out << csv_header << '\n';
  for (auto& r : results) {
    out << r.input << ',' << short_name(r.variant) << ',' << r.workers << ',' << r.heartbeat << ',';
    if (r.refused()) {
      out << "n/a,n/a,";
    } else {
      out << fixed(*r.median_seconds, 9) << ',' << fixed(*r.speedup_vs_v5, 4) << ',';
    }
    out << r.counters.tasks_created << ',' << r.counters.promotions << ',' << r.counters.steals << ',';
    if (r.checksum) {
      out << *r.checksum;
    } else {
      out << "n/a";
    }
    out << '\n';
  }
  return out.str();
}

auto emit_json(std::span<const BenchResult> results) -> std::string {
  auto records = nlohmann::json::array();
  for (auto& r : results) {
    nlohmann::json j;
    j["input"] = r.input;
    j["variant"] = short_name(r.variant);
    j["workers"] = r.workers;
    j["H"] = r.heartbeat;
    j["status"] = r.refused() ? "n/a" : "ok";
    j["median_seconds"] = r.median_seconds ? nlohmann::json(*r.median_seconds) : nlohmann::json(nullptr);
    j["speedup_vs_V5"] = r.speedup_vs_v5 ? nlohmann::json(*r.speedup_vs_v5) : nlohmann::json(nullptr);
    j["checksum"] = r.checksum ? nlohmann::json(*r.checksum) : nlohmann::json(nullptr);
    j["counters"] = {
      {"tasks_created", r.counters.tasks_created},
      {"joins", r.counters.joins},
      {"promotions", r.counters.promotions},
      {"heartbeat_fires", r.counters.heartbeat_fires},
      {"steals", r.counters.steals},
      {"loop_trips", r.counters.loop_trips},
    };
    if (! r.note.empty()) {
      j["note"] = r.note;
    }
    records.push_back(std::move(j));
  }
  return records.dump(2) + "\n";
}

template <typename T>
auto parse_number(std::string_view field, std::string_view text) -> T {
  T x{};
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), x);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw std::invalid_argument("bad CSV value for " + std::string(field) + ": " + std::string(text));
  }
  return x;
}

} // end namespace

auto emit(std::span<const BenchResult> results, OutputFormat format) -> std::string {
  switch (format) {
  case OutputFormat::Human: return emit_human(results);
  case OutputFormat::CSV:   return emit_csv(results);
  case OutputFormat::JSON:  return emit_json(results);
  }
  return {};
}

auto parse_csv(std::string_view text) -> std::vector<BenchResult> {
  std::vector<BenchResult> out;
  std::istringstream in{std::string(text)};
  std::string line;
  if (! std::getline(in, line) || line != csv_header) {
    throw std::invalid_argument("CSV header mismatch");
  }
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) {
      f.push_back(field);
    }
    if (f.size() != 10) {
      throw std::invalid_argument("CSV row needs 10 fields: " + line);
    }
    BenchResult r;
    r.input = f[0];
    r.variant = parse_variant(f[1]);
    r.workers = parse_number<unsigned>("workers", f[2]);
    r.heartbeat = parse_number<std::uint64_t>("H", f[3]);
    if (f[4] != "n/a") {
      r.median_seconds = parse_number<double>("median_seconds", f[4]);
      r.speedup_vs_v5 = parse_number<double>("speedup_vs_v5", f[5]);
    }
    r.counters.tasks_created = parse_number<std::uint64_t>("tasks_created", f[6]);
    r.counters.promotions = parse_number<std::uint64_t>("promotions", f[7]);
    r.counters.steals = parse_number<std::uint64_t>("steals", f[8]);
    if (f[9] != "n/a") {
      r.checksum = parse_number<std::int64_t>("checksum", f[9]);
    }
    out.push_back(std::move(r));
  }
  return out;
}

} // namespace hbt::bench

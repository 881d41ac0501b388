#include "lvpoly/feeder.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>

namespace lvpoly {

char phase_letter(Phase p) {
  return static_cast<char>('a' + index_of(p));
}

Phase phase_from_letter(char c) {
  switch (c) {
    case 'a': case 'A': return Phase::A;
    case 'b': case 'B': return Phase::B;
    case 'c': case 'C': return Phase::C;
    default: throw std::invalid_argument(std::string("phase must be a, b or c, got '") + c + "'");
  }
}

FeederError::FeederError(const std::string& what, std::size_t line)
    : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

bool Branch::operator==(const Branch& o) const {
  return from_bus == o.from_bus && to_bus == o.to_bus && length_m == o.length_m &&
         ampacity_a == o.ampacity_a && z_ohm_per_km == o.z_ohm_per_km;
}

PhaseVector Feeder::source_voltage_pu() const {
  PhaseVector v;
  for (std::size_t p = 0; p < 3; ++p)
    v(p) = std::polar(source.v_pu[p], source.angle_deg[p] * std::numbers::pi / 180.0);
  return v;
}

std::optional<std::size_t> Feeder::bus_index(const std::string& id) const {
  auto it = std::find(buses.begin(), buses.end(), id);
  if (it == buses.end()) return std::nullopt;
  return static_cast<std::size_t>(it - buses.begin());
}

std::optional<std::size_t> Feeder::customer_index(const std::string& id) const {
  for (std::size_t i = 0; i < customers.size(); ++i)
    if (customers[i].id == id) return i;
  return std::nullopt;
}

std::size_t Feeder::require_customer(const std::string& id) const {
  if (auto i = customer_index(id)) return *i;
  throw std::out_of_range("unknown customer '" + id + "'");
}

std::size_t Feeder::dg_count() const {
  return static_cast<std::size_t>(
      std::count_if(customers.begin(), customers.end(), [](const Customer& c) { return c.dg.has_value(); }));
}

PhaseMatrix kron_reduce(const CableMatrix& z) {
  const Complex znn = z(3, 3);
  if (std::abs(znn) == 0.0) throw std::invalid_argument("neutral self impedance is zero");
  PhaseMatrix out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out(i, j) = z(i, j) - z(i, 3) * z(3, j) / znn;
  return out;
}

std::vector<Diagnostic> validate_radial(const Feeder& f, const FeederLimits& limits) {
  std::vector<Diagnostic> report;
  auto add = [&](std::string kind, std::string msg) { report.push_back({std::move(kind), std::move(msg)}); };

  std::map<std::string, std::size_t> bus_pos;
  for (std::size_t i = 0; i < f.buses.size(); ++i) {
    if (!bus_pos.emplace(f.buses[i], i).second) add("duplicate_id", "bus '" + f.buses[i] + "' declared twice");
  }
  auto source_it = bus_pos.find(f.source.bus);
  if (source_it == bus_pos.end()) add("source", "source bus '" + f.source.bus + "' is not in the bus list");
  for (std::size_t p = 0; p < 3; ++p)
    if (!(f.source.v_pu[p] > 0.0)) add("source", "source voltage magnitude must be positive");
  if (!(f.base_voltage_v > 0.0) || !(f.base_power_kva > 0.0)) add("source", "base quantities must be positive");

  // Union-find over buses to detect loops independently of the edge count.
  std::vector<std::size_t> parent(f.buses.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<std::vector<std::size_t>> adj(f.buses.size());
  for (std::size_t b = 0; b < f.branches.size(); ++b) {
    const Branch& br = f.branches[b];
    auto fi = bus_pos.find(br.from_bus);
    auto ti = bus_pos.find(br.to_bus);
    const std::string tag = "branch " + br.from_bus + "-" + br.to_bus;
    if (fi == bus_pos.end() || ti == bus_pos.end()) {
      add("unknown_bus", tag + " references an unknown bus");
      continue;
    }
    if (!(br.length_m > 0.0)) add("length", tag + " has non-positive length");
    if (!(br.ampacity_a > 0.0)) add("ampacity", tag + " has non-positive ampacity");
    for (int i = 0; i < 3; ++i) {
      if (!(br.z_ohm_per_km(i, i).real() > 0.0)) add("impedance", tag + " has a non-positive diagonal resistance");
      for (int j = i + 1; j < 3; ++j)
        if (br.z_ohm_per_km(i, j) != br.z_ohm_per_km(j, i)) add("impedance", tag + " impedance is not symmetric");
    }
    adj[fi->second].push_back(ti->second);
    adj[ti->second].push_back(fi->second);
    const std::size_t ra = find(fi->second), rb = find(ti->second);
    if (ra == rb) {
      add("cycle", tag + " closes a loop");
    } else {
      parent[ra] = rb;
    }
  }

  if (source_it != bus_pos.end()) {
    std::vector<bool> seen(f.buses.size(), false);
    std::queue<std::size_t> q;
    q.push(source_it->second);
    seen[source_it->second] = true;
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop();
      for (std::size_t v : adj[u])
        if (!seen[v]) {
          seen[v] = true;
          q.push(v);
        }
    }
    for (std::size_t i = 0; i < f.buses.size(); ++i)
      if (!seen[i]) add("unreachable", "bus '" + f.buses[i] + "' is not reachable from the source");
  }

  std::set<std::string> customer_ids;
  for (const Customer& c : f.customers) {
    if (!customer_ids.insert(c.id).second) add("duplicate_id", "customer '" + c.id + "' declared twice");
    if (!bus_pos.count(c.bus)) add("unknown_bus", "customer '" + c.id + "' references unknown bus '" + c.bus + "'");
    if (c.dg && (!(c.dg->rating_kw > 0.0) || c.dg->rating_kw < limits.dg_min_kw || c.dg->rating_kw > limits.dg_max_kw))
      add("dg_rating", "customer '" + c.id + "' DG rating outside the configured range");
  }
  return report;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_number(const std::string& text, std::size_t line) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = first + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) throw FeederError("invalid number '" + text + "'", line);
  return v;
}

std::vector<double> parse_list(const std::string& text, std::size_t line) {
  std::vector<double> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    out.push_back(parse_number(trim(text.substr(start, comma - start)), line));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

using Record = std::map<std::string, std::string>;

Record parse_record(const std::string& line_text, std::size_t line) {
  Record rec;
  std::istringstream ss(line_text);
  std::string token;
  while (ss >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == token.size())
      throw FeederError("expected key=value, got '" + token + "'", line);
    if (!rec.emplace(token.substr(0, eq), token.substr(eq + 1)).second)
      throw FeederError("repeated key '" + token.substr(0, eq) + "'", line);
  }
  return rec;
}

class RecordReader {
public:
  RecordReader(Record rec, std::size_t line) : rec_(std::move(rec)), line_(line) {}

  std::string take(const std::string& key) {
    auto it = rec_.find(key);
    if (it == rec_.end()) throw FeederError("missing key '" + key + "'", line_);
    std::string v = std::move(it->second);
    rec_.erase(it);
    return v;
  }
  std::optional<std::string> take_optional(const std::string& key) {
    auto it = rec_.find(key);
    if (it == rec_.end()) return std::nullopt;
    std::string v = std::move(it->second);
    rec_.erase(it);
    return v;
  }
  double number(const std::string& key) { return parse_number(take(key), line_); }
  std::vector<double> list(const std::string& key) { return parse_list(take(key), line_); }
  void finish() const {
    if (!rec_.empty()) throw FeederError("unknown key '" + rec_.begin()->first + "'", line_);
  }
  std::size_t line() const { return line_; }

private:
  Record rec_;
  std::size_t line_;
};

PhaseMatrix impedance_from_lists(const std::vector<double>& r, const std::vector<double>& x, std::size_t line) {
  if (r.size() != x.size()) throw FeederError("resistance and reactance matrices differ in size", line);
  if (r.size() == 9) {
    PhaseMatrix z;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) z(i, j) = Complex(r[3 * i + j], x[3 * i + j]);
    return z;
  }
  if (r.size() == 16) {
    CableMatrix z;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) z(i, j) = Complex(r[4 * i + j], x[4 * i + j]);
    return kron_reduce(z);
  }
  throw FeederError("impedance matrix must have 9 (3x3) or 16 (4x4) entries", line);
}

std::array<double, 3> three(const std::vector<double>& v, const std::string& key, std::size_t line) {
  if (v.size() != 3) throw FeederError("'" + key + "' needs three comma-separated values", line);
  return {v[0], v[1], v[2]};
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Feeder parse_feeder(std::istream& in, const FeederLimits& limits) {
  Feeder f;
  enum class Section { None, Source, Buses, Branches, Customers } section = Section::None;
  bool have_source = false;
  std::set<std::string> bus_ids;
  std::set<std::string> customer_ids;
  struct Pending {
    std::size_t line;
    std::string what;
    std::string bus;
  };
  std::vector<Pending> bus_refs;

  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']') throw FeederError("unterminated section header", line);
      const std::string name = text.substr(1, text.size() - 2);
      if (name == "source") section = Section::Source;
      else if (name == "buses") section = Section::Buses;
      else if (name == "branches") section = Section::Branches;
      else if (name == "customers") section = Section::Customers;
      else throw FeederError("unknown section '" + name + "'", line);
      continue;
    }
    RecordReader rec(parse_record(text, line), line);
    switch (section) {
      case Section::None:
        throw FeederError("record outside of a section", line);
      case Section::Source: {
        if (have_source) throw FeederError("more than one source record", line);
        have_source = true;
        f.source.bus = rec.take("bus");
        f.source.v_pu = three(rec.list("v_pu"), "v_pu", line);
        if (auto a = rec.take_optional("angle_deg")) f.source.angle_deg = three(parse_list(*a, line), "angle_deg", line);
        f.base_voltage_v = rec.number("base_voltage_v");
        f.base_power_kva = rec.number("base_power_kva");
        bus_refs.push_back({line, "source", f.source.bus});
        break;
      }
      case Section::Buses: {
        std::string id = rec.take("id");
        if (!bus_ids.insert(id).second) throw FeederError("duplicate bus id '" + id + "'", line);
        f.buses.push_back(std::move(id));
        break;
      }
      case Section::Branches: {
        Branch br;
        br.from_bus = rec.take("from");
        br.to_bus = rec.take("to");
        br.length_m = rec.number("length_m");
        br.ampacity_a = rec.number("ampacity_a");
        const auto r = rec.list("r_ohm_per_km");
        const auto x = rec.list("x_ohm_per_km");
        br.z_ohm_per_km = impedance_from_lists(r, x, line);
        bus_refs.push_back({line, "branch", br.from_bus});
        bus_refs.push_back({line, "branch", br.to_bus});
        f.branches.push_back(std::move(br));
        break;
      }
      case Section::Customers: {
        Customer c;
        c.id = rec.take("id");
        if (!customer_ids.insert(c.id).second) throw FeederError("duplicate customer id '" + c.id + "'", line);
        c.bus = rec.take("bus");
        const std::string ph = rec.take("phase");
        if (ph.size() != 1) throw FeederError("phase must be a, b or c", line);
        try {
          c.phase = phase_from_letter(ph[0]);
        } catch (const std::invalid_argument& e) {
          throw FeederError(e.what(), line);
        }
        if (auto dg = rec.take_optional("dg_kw")) c.dg = DGUnit{parse_number(*dg, line)};
        bus_refs.push_back({line, "customer", c.bus});
        f.customers.push_back(std::move(c));
        break;
      }
    }
    rec.finish();
  }
  if (!have_source) throw FeederError("missing [source] record");
  for (const Pending& p : bus_refs)
    if (!bus_ids.count(p.bus)) throw FeederError(p.what + " references unknown bus '" + p.bus + "'", p.line);

  const auto report = validate_radial(f, limits);
  if (!report.empty()) throw FeederError(report.front().kind + ": " + report.front().message);
  return f;
}

Feeder parse_feeder_string(const std::string& text, const FeederLimits& limits) {
  std::istringstream in(text);
  return parse_feeder(in, limits);
}

Feeder load_feeder(const std::string& path, const FeederLimits& limits) {
  std::ifstream in(path);
  if (!in) throw FeederError("cannot open feeder file '" + path + "'");
  return parse_feeder(in, limits);
}

std::string serialize_feeder(const Feeder& f) {
  std::ostringstream out;
  out << "[source]\n"
      << "bus=" << f.source.bus << " v_pu=" << fmt(f.source.v_pu[0]) << ',' << fmt(f.source.v_pu[1]) << ','
      << fmt(f.source.v_pu[2]) << " angle_deg=" << fmt(f.source.angle_deg[0]) << ',' << fmt(f.source.angle_deg[1])
      << ',' << fmt(f.source.angle_deg[2]) << " base_voltage_v=" << fmt(f.base_voltage_v)
      << " base_power_kva=" << fmt(f.base_power_kva) << "\n\n[buses]\n";
  for (const auto& b : f.buses) out << "id=" << b << '\n';
  out << "\n[branches]\n";
  for (const Branch& br : f.branches) {
    out << "from=" << br.from_bus << " to=" << br.to_bus << " length_m=" << fmt(br.length_m)
        << " ampacity_a=" << fmt(br.ampacity_a) << " r_ohm_per_km=";
    for (int k = 0; k < 9; ++k) out << (k ? "," : "") << fmt(br.z_ohm_per_km(k / 3, k % 3).real());
    out << " x_ohm_per_km=";
    for (int k = 0; k < 9; ++k) out << (k ? "," : "") << fmt(br.z_ohm_per_km(k / 3, k % 3).imag());
    out << '\n';
  }
  out << "\n[customers]\n";
  for (const Customer& c : f.customers) {
    out << "id=" << c.id << " bus=" << c.bus << " phase=" << phase_letter(c.phase);
    if (c.dg) out << " dg_kw=" << fmt(c.dg->rating_kw);
    out << '\n';
  }
  return out.str();
}

std::uint64_t feeder_hash(const Feeder& f) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : serialize_feeder(f)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace lvpoly

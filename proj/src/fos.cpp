#include "fusim/fos.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

namespace fusim {

namespace {

// Decision table for two modalities. Columns: FoI, RGB, Depth (suffices-alone
// bits) -> RGB label, Depth label.
struct TableRow {
  std::uint8_t foi, rgb, depth, rgb_label, depth_label;
};

constexpr TableRow kTable[8] = {
    {0, 0, 0, 0, 0}, {0, 0, 1, 0, 0}, {0, 1, 0, 0, 0}, {0, 1, 1, 0, 0},
    {1, 0, 0, 1, 1}, {1, 0, 1, 0, 1}, {1, 1, 0, 1, 0}, {1, 1, 1, 0, 1},
};

std::string bits_string(std::span<const std::uint8_t> bits) {
  std::string s;
  for (auto b : bits) s.push_back(b ? '1' : '0');
  return s;
}

std::vector<std::uint8_t> parse_bits(const std::string& s) {
  std::vector<std::uint8_t> out;
  for (char c : s) {
    if (c != '0' && c != '1') throw DataError("malformed bit string: " + s);
    out.push_back(c == '1' ? 1 : 0);
  }
  return out;
}

}  // namespace

FosPolicy FosPolicy::defaults(int n_modalities) {
  FosPolicy p;
  p.keep_priority.resize(n_modalities);
  std::iota(p.keep_priority.rbegin(), p.keep_priority.rend(), 0);
  return p;
}

void FosPolicy::validate(int n_modalities) const {
  if (static_cast<int>(keep_priority.size()) != n_modalities)
    throw ConfigError("keep_priority must list every modality once");
  std::vector<bool> seen(n_modalities, false);
  for (int id : keep_priority) {
    if (id < 0 || id >= n_modalities || seen[id])
      throw ConfigError("keep_priority must be a permutation of modality ids");
    seen[id] = true;
  }
  if (mode == FosMode::table_verbatim && n_modalities != 2)
    throw ConfigError("table_verbatim mode is defined for exactly 2 modalities");
}

std::vector<std::uint8_t> derive_droppable(const FusionModel& server,
                                           const Frame& frame) {
  int n_mod = server.spec.n_modalities();
  std::vector<std::uint8_t> keep_all(n_mod, 1);
  Prediction base = predict(server, frame.features, keep_all);
  std::vector<std::uint8_t> droppable(n_mod, 0);
  for (int m = 0; m < n_mod; ++m) {
    std::vector<std::uint8_t> mask = keep_all;
    mask[m] = 0;
    Prediction masked = predict(server, frame.features, mask);
    droppable[m] = decision_equal(base.decision, masked.decision) ? 1 : 0;
  }
  return droppable;
}

std::vector<std::uint8_t> augment_labels(bool foi,
                                         const std::vector<std::uint8_t>& droppable,
                                         const FosPolicy& policy) {
  int n_mod = static_cast<int>(droppable.size());
  policy.validate(n_mod);
  if (policy.mode == FosMode::table_verbatim) {
    // "RGB suffices alone" = dropping depth changes nothing.
    std::uint8_t rgb_bit = droppable[1];
    std::uint8_t depth_bit = droppable[0];
    for (const TableRow& row : kTable)
      if (row.foi == (foi ? 1 : 0) && row.rgb == rgb_bit && row.depth == depth_bit)
        return {row.rgb_label, row.depth_label};
    throw DataError("decision table lookup failed");  // unreachable
  }
  std::vector<std::uint8_t> send(n_mod, 0);
  if (!foi) return send;
  bool any = false;
  for (int m = 0; m < n_mod; ++m) {
    send[m] = droppable[m] ? 0 : 1;
    any = any || send[m];
  }
  if (!any) send[policy.keep_priority.front()] = 1;
  return send;
}

std::vector<FosRecord> build_fos_dataset(const FusionModel& server,
                                         const Dataset& ds,
                                         const FosPolicy& policy) {
  policy.validate(server.spec.n_modalities());
  std::vector<FosRecord> records;
  records.reserve(ds.train.size());
  for (const Frame& f : ds.train) {
    FosRecord r;
    r.frame_id = f.frame_id;
    r.foi = f.foi;
    r.droppable = derive_droppable(server, f);
    r.send_label = augment_labels(f.foi != 0, r.droppable, policy);
    records.push_back(std::move(r));
  }
  return records;
}

void save_fos(const std::vector<FosRecord>& records,
              const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open for write: " + path.string());
  f << "# fsfos 1\n";
  for (const FosRecord& r : records)
    f << r.frame_id << ' ' << int(r.foi) << ' ' << bits_string(r.droppable)
      << ' ' << bits_string(r.send_label) << "\n";
  if (!f) throw DataError("write failed: " + path.string());
}

std::vector<FosRecord> load_fos(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open fos file: " + path.string());
  std::string line;
  if (!std::getline(f, line) || line != "# fsfos 1")
    throw DataError("bad fos file magic: " + path.string());
  std::vector<FosRecord> records;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto toks = split_ws(line);
    if (toks.size() != 4) throw DataError("malformed fos line: " + line);
    FosRecord r;
    r.frame_id = std::stoll(toks[0]);
    r.foi = static_cast<std::uint8_t>(std::stoi(toks[1]));
    r.droppable = parse_bits(toks[2]);
    r.send_label = parse_bits(toks[3]);
    if (r.droppable.size() != r.send_label.size())
      throw DataError("fos bit widths disagree: " + line);
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace fusim

#pragma once

// Controller memory images for one core:
//   MEM_E2A  - per source neuron: row count B and start address A into MEM_S&N
//   phase    - per source neuron: how B splits across placement phases
//   MEM_S&N  - per row and engine: select bit, virtual-neuron index, weight address
//   wmem_j   - per engine: signed 8-bit weight words
// plus the bit-exact hex codec for all of them.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "menage/bits.hpp"
#include "menage/error.hpp"
#include "menage/mapper.hpp"
#include "menage/snn_model.hpp"

namespace menage {

struct BitLayout {
  std::uint32_t engines = 1;     // M
  std::uint32_t capacitors = 1;  // N
  std::uint32_t phases = 1;
  unsigned count_bits = 1;   // E2A B field
  unsigned addr_bits = 1;    // E2A A field
  unsigned vn_bits = 1;      // S&N capacitor index
  unsigned waddr_bits = 1;   // S&N weight address
  std::size_t e2a_depth = 0;
  std::size_t sn_depth = 0;
  std::size_t sn_populated = 0;
  std::size_t wmem_depth = 0;

  std::size_t e2a_width() const { return count_bits + addr_bits; }
  std::size_t sn_width() const { return engines * (1 + vn_bits + waddr_bits); }
  std::size_t phase_width() const { return phases * count_bits; }

  bool operator==(const BitLayout&) const = default;
};

struct MemE2ARow {
  std::uint32_t count = 0;  // B
  std::uint32_t start = 0;  // A, zero when B == 0

  bool operator==(const MemE2ARow&) const = default;
};

struct SNSlot {
  bool select = false;
  std::uint32_t vn = 0;
  std::uint32_t waddr = 0;

  bool operator==(const SNSlot&) const = default;
};

struct MemSNRow {
  std::vector<SNSlot> slots;  // one per engine

  bool operator==(const MemSNRow&) const = default;
};

struct MemImage {
  BitLayout layout;
  std::vector<MemE2ARow> e2a;                      // e2a_depth rows
  std::vector<std::vector<std::uint32_t>> phase_rows;  // e2a_depth x phases
  std::vector<MemSNRow> sn;                        // sn_depth rows
  std::vector<std::vector<std::int8_t>> wmem;      // engines x wmem_depth

  bool operator==(const MemImage&) const = default;
};

// Optional depth overrides; unset depths are sized to the content.
struct MemoryConfig {
  std::optional<std::size_t> e2a_depth;
  std::optional<std::size_t> sn_depth;
  std::optional<std::size_t> wmem_depth;
};

namespace detail {

struct SlotOf {
  std::uint32_t phase = 0;
  std::uint32_t engine = 0;
  std::uint32_t capacitor = 0;
  bool mapped = false;
};

inline std::vector<SlotOf> slot_table(const PhaseSchedule& schedule, std::size_t dest_count,
                                      std::size_t engines, std::size_t capacitors) {
  std::vector<SlotOf> slot(dest_count);
  for (std::size_t p = 0; p < schedule.phases.size(); ++p) {
    for (const auto& pl : schedule.phases[p].placements) {
      if (pl.neuron >= dest_count || pl.engine >= engines || pl.capacitor >= capacitors) {
        fail(ErrorKind::kRange, "mem-image",
             "schedule placement for neuron " + std::to_string(pl.neuron) + " is out of range");
      }
      if (slot[pl.neuron].mapped) {
        fail(ErrorKind::kState, "mem-image",
             "neuron " + std::to_string(pl.neuron) + " appears in more than one phase");
      }
      slot[pl.neuron] = {static_cast<std::uint32_t>(p), pl.engine, pl.capacitor, true};
    }
  }
  for (std::size_t i = 0; i < dest_count; ++i) {
    if (!slot[i].mapped) {
      fail(ErrorKind::kState, "mem-image",
           "schedule does not cover destination neuron " + std::to_string(i));
    }
  }
  return slot;
}

}  // namespace detail

// Source neurons are laid out in index order with contiguous S&N regions.
// A source's connections are grouped by phase and, within a phase, packed
// into rows holding at most one connection per engine (ordered by engine
// then capacitor). Weights are appended to each engine's memory in first-use
// order.
inline MemImage layout_from_schedule(const PhaseSchedule& schedule, const QuantizedLayer& layer,
                                     std::size_t engines, std::size_t capacitors,
                                     const MemoryConfig& cfg = {}) {
  if (engines < 1 || capacitors < 1) {
    fail(ErrorKind::kRange, "mem-image", "engine and capacitor counts must be >= 1");
  }
  const std::size_t dests = layer.rows();
  const std::size_t sources = layer.cols();
  const auto slot = detail::slot_table(schedule, dests, engines, capacitors);
  const std::size_t phases = std::max<std::size_t>(schedule.phases.size(), 1);

  MemImage img;
  img.wmem.assign(engines, {});
  std::vector<std::vector<std::uint32_t>> by_engine(engines);
  std::size_t max_rows = 0;
  for (std::size_t m = 0; m < sources; ++m) {
    MemE2ARow e2a{0, static_cast<std::uint32_t>(img.sn.size())};
    std::vector<std::uint32_t> per_phase(phases, 0);
    for (std::size_t p = 0; p < phases; ++p) {
      for (auto& list : by_engine) list.clear();
      for (std::size_t i = 0; i < dests; ++i) {
        if (layer.qweights(i, m) != 0 && slot[i].phase == p) {
          by_engine[slot[i].engine].push_back(static_cast<std::uint32_t>(i));
        }
      }
      std::size_t rows = 0;
      for (auto& list : by_engine) {
        std::sort(list.begin(), list.end(), [&](std::uint32_t a, std::uint32_t b) {
          return slot[a].capacitor < slot[b].capacitor;
        });
        rows = std::max(rows, list.size());
      }
      for (std::size_t r = 0; r < rows; ++r) {
        MemSNRow row;
        row.slots.resize(engines);
        for (std::size_t j = 0; j < engines; ++j) {
          if (r >= by_engine[j].size()) continue;
          const auto i = by_engine[j][r];
          row.slots[j] = {true, slot[i].capacitor, static_cast<std::uint32_t>(img.wmem[j].size())};
          img.wmem[j].push_back(layer.qweights(i, m));
        }
        img.sn.push_back(std::move(row));
      }
      per_phase[p] = static_cast<std::uint32_t>(rows);
      e2a.count += static_cast<std::uint32_t>(rows);
    }
    if (e2a.count == 0) e2a.start = 0;
    max_rows = std::max<std::size_t>(max_rows, e2a.count);
    img.e2a.push_back(e2a);
    img.phase_rows.push_back(std::move(per_phase));
  }

  auto& lay = img.layout;
  lay.engines = static_cast<std::uint32_t>(engines);
  lay.capacitors = static_cast<std::uint32_t>(capacitors);
  lay.phases = static_cast<std::uint32_t>(phases);
  lay.sn_populated = img.sn.size();
  std::size_t wmem_used = 0;
  for (const auto& w : img.wmem) wmem_used = std::max(wmem_used, w.size());

  lay.e2a_depth = cfg.e2a_depth.value_or(sources);
  lay.sn_depth = cfg.sn_depth.value_or(lay.sn_populated);
  lay.wmem_depth = cfg.wmem_depth.value_or(wmem_used);
  if (lay.e2a_depth < sources) {
    fail(ErrorKind::kAddressOverflow, "mem-image",
         "MEM_E2A depth " + std::to_string(lay.e2a_depth) + " is below the " +
             std::to_string(sources) + " source neurons");
  }
  if (lay.sn_depth < lay.sn_populated) {
    fail(ErrorKind::kAddressOverflow, "mem-image",
         "MEM_S&N depth " + std::to_string(lay.sn_depth) + " cannot hold " +
             std::to_string(lay.sn_populated) + " rows");
  }
  if (lay.wmem_depth < wmem_used) {
    fail(ErrorKind::kAddressOverflow, "mem-image",
         "weight memory depth " + std::to_string(lay.wmem_depth) + " cannot hold " +
             std::to_string(wmem_used) + " words");
  }
  lay.count_bits = ceil_log2(max_rows + 1);
  lay.addr_bits = ceil_log2(lay.sn_depth);
  lay.vn_bits = ceil_log2(capacitors);
  lay.waddr_bits = ceil_log2(lay.wmem_depth);

  img.e2a.resize(lay.e2a_depth);
  img.phase_rows.resize(lay.e2a_depth, std::vector<std::uint32_t>(phases, 0));
  img.sn.resize(lay.sn_depth, MemSNRow{std::vector<SNSlot>(engines)});
  for (auto& w : img.wmem) w.resize(lay.wmem_depth, 0);
  return img;
}

// ---------------------------------------------------------------------------
// Hex codec

inline std::string e2a_descriptor(const BitLayout& l) {
  return "B:" + std::to_string(l.count_bits) + ",A:" + std::to_string(l.addr_bits) +
         ";depth=" + std::to_string(l.e2a_depth);
}
inline std::string phase_descriptor(const BitLayout& l) {
  return std::to_string(l.phases) + "x(B:" + std::to_string(l.count_bits) +
         ");depth=" + std::to_string(l.e2a_depth);
}
inline std::string sn_descriptor(const BitLayout& l) {
  return std::to_string(l.engines) + "x(ni:1,vn:" + std::to_string(l.vn_bits) +
         ",waddr:" + std::to_string(l.waddr_bits) + ");depth=" + std::to_string(l.sn_depth) +
         ";populated=" + std::to_string(l.sn_populated);
}
inline std::string wmem_descriptor(const BitLayout& l) {
  return "w:8;depth=" + std::to_string(l.wmem_depth);
}

inline nlohmann::ordered_json layout_to_json(const BitLayout& l) {
  return {{"engines", l.engines},       {"capacitors", l.capacitors},
          {"phases", l.phases},         {"count_bits", l.count_bits},
          {"addr_bits", l.addr_bits},   {"vn_bits", l.vn_bits},
          {"waddr_bits", l.waddr_bits}, {"e2a_depth", l.e2a_depth},
          {"sn_depth", l.sn_depth},     {"sn_populated", l.sn_populated},
          {"wmem_depth", l.wmem_depth}};
}

inline BitLayout layout_from_json(const nlohmann::json& j) {
  BitLayout l;
  try {
    l.engines = j.at("engines").get<std::uint32_t>();
    l.capacitors = j.at("capacitors").get<std::uint32_t>();
    l.phases = j.at("phases").get<std::uint32_t>();
    l.count_bits = j.at("count_bits").get<unsigned>();
    l.addr_bits = j.at("addr_bits").get<unsigned>();
    l.vn_bits = j.at("vn_bits").get<unsigned>();
    l.waddr_bits = j.at("waddr_bits").get<unsigned>();
    l.e2a_depth = j.at("e2a_depth").get<std::size_t>();
    l.sn_depth = j.at("sn_depth").get<std::size_t>();
    l.sn_populated = j.at("sn_populated").get<std::size_t>();
    l.wmem_depth = j.at("wmem_depth").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, "mem-image", std::string("layout descriptor: ") + e.what());
  }
  if (l.engines < 1 || l.capacitors < 1 || l.phases < 1 || l.count_bits < 1 || l.addr_bits < 1 ||
      l.vn_bits < 1 || l.waddr_bits < 1 || l.count_bits > 32 || l.addr_bits > 32 ||
      l.vn_bits > 32 || l.waddr_bits > 32) {
    fail(ErrorKind::kLayoutMismatch, "mem-image", "layout descriptor has invalid widths");
  }
  return l;
}

inline std::string wmem_file_name(std::size_t engine) {
  return "wmem_" + std::to_string(engine) + ".hex";
}

using ImageFiles = std::map<std::string, std::string>;

// One row per line, most-significant field first. S&N fields are emitted
// for engine M-1 down to 0, phase counts for phase P-1 down to 0.
inline ImageFiles encode(const MemImage& img) {
  const auto& l = img.layout;
  ImageFiles files;
  {
    std::string out = "# fields=" + e2a_descriptor(l) + "\n";
    for (const auto& row : img.e2a) {
      BitRow bits;
      bits.push(row.count, l.count_bits);
      bits.push(row.start, l.addr_bits);
      out += bits.to_hex() + "\n";
    }
    files["e2a.hex"] = std::move(out);
  }
  {
    std::string out = "# fields=" + phase_descriptor(l) + "\n";
    for (const auto& counts : img.phase_rows) {
      BitRow bits;
      for (std::size_t p = l.phases; p-- > 0;) bits.push(counts[p], l.count_bits);
      out += bits.to_hex() + "\n";
    }
    files["phase.hex"] = std::move(out);
  }
  {
    std::string out = "# fields=" + sn_descriptor(l) + "\n";
    for (const auto& row : img.sn) {
      BitRow bits;
      for (std::size_t j = l.engines; j-- > 0;) {
        const auto& s = row.slots[j];
        bits.push(s.select ? 1 : 0, 1);
        bits.push(s.select ? s.vn : 0, l.vn_bits);
        bits.push(s.select ? s.waddr : 0, l.waddr_bits);
      }
      out += bits.to_hex() + "\n";
    }
    files["sn.hex"] = std::move(out);
  }
  for (std::size_t j = 0; j < l.engines; ++j) {
    std::string out = "# fields=" + wmem_descriptor(l) + "\n";
    for (auto w : img.wmem[j]) {
      BitRow bits;
      bits.push(static_cast<std::uint8_t>(w), 8);
      out += bits.to_hex() + "\n";
    }
    files[wmem_file_name(j)] = std::move(out);
  }
  files["layout.json"] = layout_to_json(l).dump(2) + "\n";
  return files;
}

namespace detail {

// Splits a hex file into its rows after checking the header descriptor.
inline std::vector<BitRow> read_hex_rows(const ImageFiles& files, const std::string& name,
                                         const std::string& descriptor, std::size_t width,
                                         std::size_t depth) {
  const auto it = files.find(name);
  if (it == files.end()) fail(ErrorKind::kIo, "mem-image", "missing image file " + name);
  std::istringstream in(it->second);
  std::string line;
  std::size_t line_no = 0;
  std::vector<BitRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      if (line != "# fields=" + descriptor) {
        fail(ErrorKind::kLayoutMismatch, "mem-image",
             name + ": header '" + line + "' does not match layout '# fields=" + descriptor + "'");
      }
      continue;
    }
    rows.push_back(BitRow::from_hex(line, width, line_no));
  }
  if (line_no == 0) fail(ErrorKind::kMalformed, "mem-image", name + ": empty file");
  if (rows.size() != depth) {
    fail(ErrorKind::kLayoutMismatch, "mem-image",
         name + ": " + std::to_string(rows.size()) + " rows, layout declares " +
             std::to_string(depth));
  }
  return rows;
}

}  // namespace detail

inline MemImage decode(const ImageFiles& files) {
  const auto it = files.find("layout.json");
  if (it == files.end()) fail(ErrorKind::kIo, "mem-image", "missing image file layout.json");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(it->second);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, "mem-image", std::string("layout.json: ") + e.what());
  }
  MemImage img;
  img.layout = layout_from_json(doc);
  const auto& l = img.layout;

  for (const auto& row : detail::read_hex_rows(files, "e2a.hex", e2a_descriptor(l), l.e2a_width(),
                                               l.e2a_depth)) {
    BitRow::Reader r(row);
    MemE2ARow e;
    e.count = static_cast<std::uint32_t>(r.take(l.count_bits));
    e.start = static_cast<std::uint32_t>(r.take(l.addr_bits));
    img.e2a.push_back(e);
  }
  for (const auto& row : detail::read_hex_rows(files, "phase.hex", phase_descriptor(l),
                                               l.phase_width(), l.e2a_depth)) {
    BitRow::Reader r(row);
    std::vector<std::uint32_t> counts(l.phases);
    for (std::size_t p = l.phases; p-- > 0;) counts[p] = static_cast<std::uint32_t>(r.take(l.count_bits));
    img.phase_rows.push_back(std::move(counts));
  }
  for (const auto& row :
       detail::read_hex_rows(files, "sn.hex", sn_descriptor(l), l.sn_width(), l.sn_depth)) {
    BitRow::Reader r(row);
    MemSNRow sn;
    sn.slots.resize(l.engines);
    for (std::size_t j = l.engines; j-- > 0;) {
      auto& s = sn.slots[j];
      s.select = r.take(1) != 0;
      s.vn = static_cast<std::uint32_t>(r.take(l.vn_bits));
      s.waddr = static_cast<std::uint32_t>(r.take(l.waddr_bits));
    }
    img.sn.push_back(std::move(sn));
  }
  for (std::size_t j = 0; j < l.engines; ++j) {
    std::vector<std::int8_t> words;
    for (const auto& row :
         detail::read_hex_rows(files, wmem_file_name(j), wmem_descriptor(l), 8, l.wmem_depth)) {
      BitRow::Reader r(row);
      words.push_back(static_cast<std::int8_t>(static_cast<std::uint8_t>(r.take(8))));
    }
    img.wmem.push_back(std::move(words));
  }
  return img;
}

inline void write_image(const MemImage& img, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, text] : encode(img)) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) fail(ErrorKind::kIo, "mem-image", "cannot write " + (dir / name).string());
    out << text;
  }
}

inline MemImage read_image(const std::filesystem::path& dir) {
  ImageFiles files;
  auto slurp = [&](const std::string& name) {
    std::ifstream in(dir / name, std::ios::binary);
    if (!in) fail(ErrorKind::kIo, "mem-image", "cannot read " + (dir / name).string());
    files[name].assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  };
  slurp("layout.json");
  slurp("e2a.hex");
  slurp("phase.hex");
  slurp("sn.hex");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(files["layout.json"]);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, "mem-image", std::string("layout.json: ") + e.what());
  }
  const auto layout = layout_from_json(doc);
  for (std::size_t j = 0; j < layout.engines; ++j) slurp(wmem_file_name(j));
  return decode(files);
}

// ---------------------------------------------------------------------------
// Semantic walk

struct ImageConnection {
  std::uint32_t source = 0;
  std::uint32_t phase = 0;
  std::uint32_t engine = 0;
  std::uint32_t capacitor = 0;
  std::int8_t weight = 0;

  auto operator<=>(const ImageConnection&) const = default;
};

// Walks E2A -> phase table -> S&N -> weight memory the way the controller does.
inline std::vector<ImageConnection> reconstruct_connectivity(const MemImage& img) {
  const auto& l = img.layout;
  std::vector<ImageConnection> out;
  for (std::size_t m = 0; m < img.e2a.size(); ++m) {
    const auto& e = img.e2a[m];
    if (e.count == 0) continue;
    if (static_cast<std::size_t>(e.start) + e.count > img.sn.size()) {
      fail(ErrorKind::kDangling, "mem-image",
           "source " + std::to_string(m) + " rows [" + std::to_string(e.start) + ", " +
               std::to_string(e.start + e.count) + ") exceed MEM_S&N depth " +
               std::to_string(img.sn.size()));
    }
    std::size_t row = e.start;
    std::size_t covered = 0;
    for (std::uint32_t p = 0; p < l.phases; ++p) {
      const auto rows = img.phase_rows.at(m).at(p);
      covered += rows;
      if (covered > e.count) break;
      for (std::uint32_t r = 0; r < rows; ++r, ++row) {
        for (std::uint32_t j = 0; j < l.engines; ++j) {
          const auto& s = img.sn[row].slots[j];
          if (!s.select) continue;
          if (s.waddr >= img.wmem[j].size() || s.vn >= l.capacitors) {
            fail(ErrorKind::kDangling, "mem-image",
                 "MEM_S&N row " + std::to_string(row) + " engine " + std::to_string(j) +
                     " points outside the engine");
          }
          out.push_back({static_cast<std::uint32_t>(m), p, j, s.vn, img.wmem[j][s.waddr]});
        }
      }
    }
    if (covered != e.count) {
      fail(ErrorKind::kDangling, "mem-image",
           "source " + std::to_string(m) + " phase table covers " + std::to_string(covered) +
               " rows but MEM_E2A declares " + std::to_string(e.count));
    }
  }
  return out;
}

struct WeightedConnection {
  std::uint32_t source = 0;
  std::uint32_t dest = 0;
  std::int8_t weight = 0;

  auto operator<=>(const WeightedConnection&) const = default;
};

// Maps reconstructed (phase, engine, capacitor) slots back to destination
// neurons through the schedule. Result sorted by (source, dest).
inline std::vector<WeightedConnection> resolve_connections(
    const std::vector<ImageConnection>& conns, const PhaseSchedule& schedule) {
  std::map<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>, std::uint32_t> owner;
  for (std::size_t p = 0; p < schedule.phases.size(); ++p) {
    for (const auto& pl : schedule.phases[p].placements) {
      owner[{static_cast<std::uint32_t>(p), pl.engine, pl.capacitor}] = pl.neuron;
    }
  }
  std::vector<WeightedConnection> out;
  for (const auto& c : conns) {
    const auto it = owner.find({c.phase, c.engine, c.capacitor});
    if (it == owner.end()) {
      fail(ErrorKind::kDangling, "mem-image",
           "slot (phase " + std::to_string(c.phase) + ", engine " + std::to_string(c.engine) +
               ", capacitor " + std::to_string(c.capacitor) + ") is not occupied");
    }
    out.push_back({c.source, it->second, c.weight});
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<WeightedConnection> quantized_connectivity(const QuantizedLayer& layer) {
  std::vector<WeightedConnection> out;
  for (std::size_t m = 0; m < layer.cols(); ++m) {
    for (std::size_t i = 0; i < layer.rows(); ++i) {
      if (layer.qweights(i, m) != 0) {
        out.push_back({static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(i),
                       layer.qweights(i, m)});
      }
    }
  }
  return out;
}

}  // namespace menage

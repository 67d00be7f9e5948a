#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "qpc/errors.hpp"

namespace qpc::mux {

// Two 16-branch binary-tree multiplexers (source-drain rows, gate columns).
// Four levels, two complementary addressing lines per level, so 8 lines per
// tree; with source, drain and gate that is 8 + 8 + 3 = 19 external contacts.
inline constexpr int kLevels = 4;
inline constexpr int kLeaves = 16;
inline constexpr int kLinesPerTree = 2 * kLevels;
inline constexpr int kExternalContacts = kLinesPerTree + kLinesPerTree + 3;

struct MuxAddress {
  int row = 1;     // 1..16
  int column = 1;  // 1..16

  void validate() const {
    if (row < 1 || row > kLeaves || column < 1 || column > kLeaves) {
      throw ArgumentError("mux address outside 1..16");
    }
  }
  std::string label() const;  // "QFET(row,column)"
};

enum class LineLevel : uint8_t { depleting = 0, open = 1 };

// One tree's addressing lines; line (level, bit) opens every level-`level`
// branch whose direction bit equals `bit`.
struct TreeLineState {
  std::array<LineLevel, kLinesPerTree> lines{};

  LineLevel line(int level, int bit) const { return lines[static_cast<size_t>(2 * level + bit)]; }
  void set_line(int level, int bit, LineLevel v) { lines[static_cast<size_t>(2 * level + bit)] = v; }
  // Within each level exactly one of the two complementary lines depletes.
  bool valid() const;
};

struct LineState {
  TreeLineState row_tree;
  TreeLineState column_tree;
};

// Leaf addressing: at level k the open line is the one matching bit k of
// (leaf - 1); its complement depletes.
LineState address_to_lines(const MuxAddress& addr);

enum class FaultMode : uint8_t { stuck_open, stuck_depleted };

struct BranchFault {
  bool on_row_tree = true;
  int level = 0;   // 0..3
  int prefix = 0;  // low-bit path prefix of length level+1, i.e. 0..2^(level+1)-1
  FaultMode mode = FaultMode::stuck_open;
};

// Leaves (1-based) that conduct for the given line assignment: a leaf
// conducts iff every branch on its root-to-leaf path is open. Healthy trees
// yield exactly one leaf.
std::vector<int> conduction_path(const TreeLineState& lines, bool on_row_tree,
                                 const std::vector<BranchFault>& faults = {});

enum class Outcome : uint8_t { measured, device_defect, open_circuit, multi_activation, error };

std::string outcome_name(Outcome o);

struct LogRecord {
  MuxAddress address;
  LineState lines;
  Outcome outcome = Outcome::measured;
  std::string fault_class;       // empty when measured
  std::string result_path;       // filled by the measurement closure
  std::vector<int> active_rows;  // conducting leaves (diagnostic)
  std::vector<int> active_columns;
};

// Per-address measurement callback: runs only for cleanly addressed,
// functional devices; returns the result file path (or empty).
using MeasureFn = std::function<std::string(const MuxAddress&)>;

// Visits all 256 addresses in row-major order, verifying the conduction path
// before invoking the measurement. Faulty addresses get a fault record, never
// a mixed measurement. `functional` flags devices by (row-1)*16 + (column-1).
std::vector<LogRecord> schedule_sweep(const std::vector<bool>& functional,
                                      const MeasureFn& measure,
                                      const std::vector<BranchFault>& faults = {});

}  // namespace qpc::mux

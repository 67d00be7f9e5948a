#include "qpc/mux.hpp"

namespace qpc::mux {

std::string MuxAddress::label() const {
  return "QFET(" + std::to_string(row) + "," + std::to_string(column) + ")";
}

bool TreeLineState::valid() const {
  for (int level = 0; level < kLevels; ++level) {
    const int depleting = (line(level, 0) == LineLevel::depleting ? 1 : 0) +
                          (line(level, 1) == LineLevel::depleting ? 1 : 0);
    if (depleting != 1) return false;
  }
  return true;
}

LineState address_to_lines(const MuxAddress& addr) {
  addr.validate();
  LineState st;
  const auto assign = [](TreeLineState& tree, int leaf_zero_based) {
    for (int level = 0; level < kLevels; ++level) {
      const int bit = (leaf_zero_based >> level) & 1;
      tree.set_line(level, bit, LineLevel::open);
      tree.set_line(level, 1 - bit, LineLevel::depleting);
    }
  };
  assign(st.row_tree, addr.row - 1);
  assign(st.column_tree, addr.column - 1);
  return st;
}

std::vector<int> conduction_path(const TreeLineState& lines, bool on_row_tree,
                                 const std::vector<BranchFault>& faults) {
  std::vector<int> active;
  for (int leaf = 0; leaf < kLeaves; ++leaf) {
    bool conducts = true;
    for (int level = 0; level < kLevels && conducts; ++level) {
      const int bit = (leaf >> level) & 1;
      bool open = lines.line(level, bit) == LineLevel::open;
      // The level-k branch of this leaf is identified by its low-bit path
      // prefix of length k+1; stuck faults override the line state.
      const int prefix = leaf & ((1 << (level + 1)) - 1);
      for (const auto& f : faults) {
        if (f.on_row_tree == on_row_tree && f.level == level && f.prefix == prefix) {
          open = f.mode == FaultMode::stuck_open;
        }
      }
      conducts = open;
    }
    if (conducts) active.push_back(leaf + 1);
  }
  return active;
}

std::string outcome_name(Outcome o) {
  switch (o) {
    case Outcome::measured: return "measured";
    case Outcome::device_defect: return "device_defect";
    case Outcome::open_circuit: return "open_circuit";
    case Outcome::multi_activation: return "multi_activation";
    case Outcome::error: return "error";
  }
  return "unknown";
}

std::vector<LogRecord> schedule_sweep(const std::vector<bool>& functional,
                                      const MeasureFn& measure,
                                      const std::vector<BranchFault>& faults) {
  if (functional.size() != static_cast<size_t>(kLeaves * kLeaves)) {
    throw ArgumentError("schedule_sweep: functional map must have 256 entries");
  }
  std::vector<LogRecord> log;
  log.reserve(functional.size());
  for (int row = 1; row <= kLeaves; ++row) {
    for (int column = 1; column <= kLeaves; ++column) {
      LogRecord rec;
      rec.address = {row, column};
      rec.lines = address_to_lines(rec.address);
      rec.active_rows = conduction_path(rec.lines.row_tree, true, faults);
      rec.active_columns = conduction_path(rec.lines.column_tree, false, faults);

      if (rec.active_rows.size() > 1 || rec.active_columns.size() > 1) {
        rec.outcome = Outcome::multi_activation;
        rec.fault_class = "multi_activation";
      } else if (rec.active_rows.empty() || rec.active_columns.empty()) {
        rec.outcome = Outcome::open_circuit;
        rec.fault_class = "open_circuit";
      } else if (rec.active_rows[0] != row || rec.active_columns[0] != column) {
        rec.outcome = Outcome::error;
        rec.fault_class = "misrouted";
      } else if (!functional[static_cast<size_t>((row - 1) * kLeaves + (column - 1))]) {
        rec.outcome = Outcome::device_defect;
        rec.fault_class = "device_defect";
      } else {
        rec.outcome = Outcome::measured;
        if (measure) {
          try {
            rec.result_path = measure(rec.address);
          } catch (const std::exception& e) {
            rec.outcome = Outcome::error;
            rec.fault_class = std::string("measurement_error: ") + e.what();
          }
        }
      }
      log.push_back(std::move(rec));
    }
  }
  return log;
}

}  // namespace qpc::mux

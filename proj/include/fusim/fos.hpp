#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fusim/fusion.hpp"

namespace fusim {

/// Per-frame droppability bits plus the augmented per-modality send/drop
/// labels used to supervise the near-sensor filters.
struct FosRecord {
  long long frame_id = 0;
  std::uint8_t foi = 0;
  std::vector<std::uint8_t> droppable;   // 1 = zeroing leaves decision unchanged
  std::vector<std::uint8_t> send_label;  // 1 = near-sensor model should transmit
};

enum class FosMode { table_verbatim, droppability_rule };

/// `keep_priority` orders modalities by who gets kept when every modality is
/// individually droppable (head of the list wins). The default puts the last
/// modality first, which for (rgb, depth) keeps depth.
struct FosPolicy {
  FosMode mode = FosMode::droppability_rule;
  std::vector<int> keep_priority;

  static FosPolicy defaults(int n_modalities);
  void validate(int n_modalities) const;
};

/// droppable_m = [decision(all kept) == decision(only m zero-filled)],
/// evaluated against the trained fusion model.
std::vector<std::uint8_t> derive_droppable(const FusionModel& server,
                                           const Frame& frame);

/// Send/drop labels from (foi, droppable).
///   droppability_rule: foi=0 -> all zero; else send the non-droppable
///   modalities; if all are droppable, send only the priority head.
///   table_verbatim: the 8-row two-modality decision table, with the table's
///   "RGB" column read as "RGB suffices alone" (= droppable_depth) and vice
///   versa. Both modes agree on all 8 rows.
std::vector<std::uint8_t> augment_labels(bool foi,
                                         const std::vector<std::uint8_t>& droppable,
                                         const FosPolicy& policy);

/// One record per train-split frame (train-only, so filter supervision never
/// sees test frames).
std::vector<FosRecord> build_fos_dataset(const FusionModel& server,
                                         const Dataset& ds,
                                         const FosPolicy& policy);

void save_fos(const std::vector<FosRecord>& records,
              const std::filesystem::path& path);
std::vector<FosRecord> load_fos(const std::filesystem::path& path);

}  // namespace fusim

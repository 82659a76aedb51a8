#pragma once

// Packed per-point panoptic labels and the thing/stuff class split.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace rangefuse {

/// Low 16 bits: semantic class. High 16 bits: instance id (0 = none).
using PanopticLabels = std::vector<std::uint32_t>;

inline constexpr std::uint16_t kVoidClass = 0;

constexpr std::uint32_t pack_label(std::uint16_t class_id, std::uint16_t instance_id) {
  return (std::uint32_t(instance_id) << 16) | class_id;
}
constexpr std::uint16_t label_class(std::uint32_t label) { return std::uint16_t(label & 0xFFFFu); }
constexpr std::uint16_t label_instance(std::uint32_t label) { return std::uint16_t(label >> 16); }

/// Raw little-endian uint32 per point. Files starting with the tensor magic
/// are read as a rank-1 uint32 tensor instead.
PanopticLabels read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, std::span<const std::uint32_t> labels);

struct ClassSplit {
  std::vector<int> thing_ids;  // sorted
  std::vector<int> stuff_ids;  // sorted
  int void_id = kVoidClass;
  int min_points = 0;
  std::map<int, std::string> names;

  /// Sorts ids and throws ConfigurationError on overlaps, duplicates, the void
  /// id appearing as a class, ids outside 16 bits or a negative threshold.
  void validate();

  bool is_thing(int class_id) const;
  bool is_stuff(int class_id) const;
  int class_count() const { return int(thing_ids.size() + stuff_ids.size()); }
  /// Sorted union of thing and stuff ids; index = logit column.
  std::vector<int> class_ids() const;
  /// Logit column of a class id, -1 when unknown.
  int column_of(int class_id) const;
  int class_of_column(int column) const;
  int no_object_column() const { return class_count(); }
  std::string name_of(int class_id) const;
};

ClassSplit read_class_split(const std::filesystem::path& path);
void write_class_split(const std::filesystem::path& path, const ClassSplit& split);

}  // namespace rangefuse

#include "rangefuse/labels.h"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <iterator>

#include "rangefuse/errors.h"
#include "rangefuse/tensor_io.h"

namespace rangefuse {

PanopticLabels read_labels(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open label file " + path.string());
  const std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (raw.size() >= 4 && std::memcmp(raw.data(), "RFT1", 4) == 0) {
    const Tensor t = read_tensor(std::span<const std::byte>(reinterpret_cast<const std::byte*>(raw.data()), raw.size()));
    if (t.rank() != 1 || t.dtype() != DType::kUInt32) throw IoError(path.string() + ": labels must be a rank-1 uint32 tensor");
    return t.values<std::uint32_t>();
  }
  if (raw.size() % 4 != 0) throw IoError(path.string() + ": label file size is not a multiple of 4");
  PanopticLabels labels(raw.size() / 4);
  if (!labels.empty()) std::memcpy(labels.data(), raw.data(), raw.size());
  return labels;
}

void write_labels(const std::filesystem::path& path, std::span<const std::uint32_t> labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write label file " + path.string());
  out.write(reinterpret_cast<const char*>(labels.data()), std::streamsize(labels.size() * 4));
}

void ClassSplit::validate() {
  std::sort(thing_ids.begin(), thing_ids.end());
  std::sort(stuff_ids.begin(), stuff_ids.end());
  const auto ids = class_ids();
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw ConfigurationError("class ids must be unique across thing and stuff sets");
  }
  for (int id : ids) {
    if (id < 0 || id > 0xFFFF) throw ConfigurationError("class id " + std::to_string(id) + " outside 16 bits");
    if (id == void_id) throw ConfigurationError("void id cannot also be a thing or stuff class");
  }
  if (min_points < 0) throw ConfigurationError("min_points must be >= 0");
}

bool ClassSplit::is_thing(int class_id) const {
  return std::binary_search(thing_ids.begin(), thing_ids.end(), class_id);
}

bool ClassSplit::is_stuff(int class_id) const {
  return std::binary_search(stuff_ids.begin(), stuff_ids.end(), class_id);
}

std::vector<int> ClassSplit::class_ids() const {
  std::vector<int> ids;
  std::merge(thing_ids.begin(), thing_ids.end(), stuff_ids.begin(), stuff_ids.end(), std::back_inserter(ids));
  return ids;
}

int ClassSplit::column_of(int class_id) const {
  const auto ids = class_ids();
  const auto it = std::lower_bound(ids.begin(), ids.end(), class_id);
  return it != ids.end() && *it == class_id ? int(it - ids.begin()) : -1;
}

int ClassSplit::class_of_column(int column) const {
  const auto ids = class_ids();
  if (column < 0 || column >= int(ids.size())) return void_id;
  return ids[std::size_t(column)];
}

std::string ClassSplit::name_of(int class_id) const {
  const auto it = names.find(class_id);
  return it != names.end() ? it->second : "class_" + std::to_string(class_id);
}

ClassSplit read_class_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open class split " + path.string());
  ClassSplit split;
  try {
    const auto doc = nlohmann::json::parse(in);
    split.thing_ids = doc.at("thing_ids").get<std::vector<int>>();
    split.stuff_ids = doc.at("stuff_ids").get<std::vector<int>>();
    split.void_id = doc.value("void_id", int(kVoidClass));
    split.min_points = doc.value("min_points", 0);
    if (doc.contains("names")) {
      for (const auto& [key, value] : doc.at("names").items()) split.names[std::stoi(key)] = value.get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigurationError("malformed class split " + path.string() + ": " + e.what());
  }
  split.validate();
  return split;
}

void write_class_split(const std::filesystem::path& path, const ClassSplit& split) {
  nlohmann::json names = nlohmann::json::object();
  for (const auto& [id, name] : split.names) names[std::to_string(id)] = name;
  const nlohmann::json doc{{"thing_ids", split.thing_ids},
                           {"stuff_ids", split.stuff_ids},
                           {"void_id", split.void_id},
                           {"min_points", split.min_points},
                           {"names", names}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write class split " + path.string());
  out << doc.dump(2) << '\n';
}

}  // namespace rangefuse

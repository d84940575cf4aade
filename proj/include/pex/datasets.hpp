#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pex/io.hpp"
#include "pex/prompting.hpp"

namespace pex::datasets {

// One labeled review. split is empty until assigned.
struct ReviewExample {
  std::string id;
  std::string text;
  std::string label;  // one of the task's two labels
  std::string split;  // "train" | "validation" | "test"
  std::size_t word_count = 0;
};

enum class Format { csv, jsonl };
Format format_from_name(std::string_view name);

// Column names and an optional mapping from raw label values onto the
// task's labels (case-sensitive; empty mapping = identity).
struct SchemaMapping {
  std::string id_column = "id";
  std::string text_column = "text";
  std::string label_column = "label";
  std::map<std::string, std::string> label_values;
};

struct SplitSpec {
  double train_fraction = 0.6;
  double validation_fraction = 0.2;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
  std::size_t min_word_count = 0;
  std::size_t per_class_cap = 0;  // 0 = unlimited
};

// Parses and validates a corpus file. Rows failing validation (empty text,
// unknown label, duplicate id) raise DataError with the row number; rows
// shorter than min_word_count are dropped. per_class_cap > 0 keeps a seeded
// random subset of each label class.
std::vector<ReviewExample> ingest(const std::filesystem::path& path,
                                  Format format, const SchemaMapping& schema,
                                  const prompting::TaskSpec& task,
                                  const SplitSpec& spec);

// Seeded shuffle then partition. Counts are floor(n * fraction) with the
// rounding remainder assigned to train, which reproduces 960/320/320 from
// 1600 inputs and 1200/400/400 from 2000 at fractions 0.6/0.2/0.2.
void assign_splits(std::vector<ReviewExample>& examples, const SplitSpec& spec);

// Canonical internal record stream: {id, text, label, split, word_count}.
void write_canonical(const std::filesystem::path& path,
                     const std::vector<ReviewExample>& examples);
std::vector<ReviewExample> read_canonical(const std::filesystem::path& path);

// Minimal RFC-4180 reader: quoted fields, doubled-quote escapes, embedded
// commas and newlines. Returns rows of fields, first row included.
std::vector<std::vector<std::string>> parse_csv(const std::string& content);

}  // namespace pex::datasets

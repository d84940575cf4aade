#include "pex/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "pex/errors.hpp"
#include "pex/rng.hpp"
#include "pex/tokenize.hpp"

namespace pex::datasets {

Format format_from_name(std::string_view name) {
  if (name == "csv") return Format::csv;
  if (name == "jsonl") return Format::jsonl;
  throw ConfigError("unknown dataset format: " + std::string(name));
}

std::vector<std::vector<std::string>> parse_csv(const std::string& content) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  std::size_t i = 0;
  const std::size_t n = content.size();
  auto end_field = [&]() {
    row.push_back(std::move(field));
    field.clear();
  };
  auto end_row = [&]() {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
  };
  while (i < n) {
    const char c = content[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < n && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      end_row();
    } else if (c == '\r') {
      // swallow, handles CRLF
    } else {
      field.push_back(c);
    }
    ++i;
  }
  if (in_quotes) throw DataError("csv: unterminated quoted field");
  if (!field.empty() || !row.empty()) end_row();
  return rows;
}

namespace {

std::string map_label(const SchemaMapping& schema,
                      const prompting::TaskSpec& task,
                      const std::string& raw, std::size_t row_number) {
  std::string value = raw;
  if (!schema.label_values.empty()) {
    auto it = schema.label_values.find(raw);
    if (it == schema.label_values.end()) {
      throw DataError("row " + std::to_string(row_number) +
                      ": label value '" + raw + "' has no mapping");
    }
    value = it->second;
  }
  if (!task.is_label(value)) {
    throw DataError("row " + std::to_string(row_number) + ": unknown label '" +
                    value + "'");
  }
  return value;
}

void validate_example(ReviewExample& ex, std::size_t row_number,
                      std::set<std::string>& seen_ids) {
  if (ex.id.empty()) {
    throw DataError("row " + std::to_string(row_number) + ": empty id");
  }
  if (ex.text.empty()) {
    throw DataError("row " + std::to_string(row_number) + ": empty text");
  }
  if (!seen_ids.insert(ex.id).second) {
    throw DataError("row " + std::to_string(row_number) + ": duplicate id '" +
                    ex.id + "'");
  }
  ex.word_count = word_count(ex.text);
}

}  // namespace

std::vector<ReviewExample> ingest(const std::filesystem::path& path,
                                  Format format, const SchemaMapping& schema,
                                  const prompting::TaskSpec& task,
                                  const SplitSpec& spec) {
  std::vector<ReviewExample> examples;
  std::set<std::string> seen_ids;

  if (format == Format::csv) {
    const auto rows = parse_csv(read_file(path));
    if (rows.empty()) throw DataError("csv: no header row in " + path.string());
    const std::vector<std::string>& header = rows[0];
    auto column = [&](const std::string& name) {
      auto it = std::find(header.begin(), header.end(), name);
      if (it == header.end()) {
        throw DataError("csv: missing column '" + name + "' in " +
                        path.string());
      }
      return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t id_col = column(schema.id_column);
    const std::size_t text_col = column(schema.text_column);
    const std::size_t label_col = column(schema.label_column);
    for (std::size_t r = 1; r < rows.size(); ++r) {
      if (rows[r].size() != header.size()) {
        throw DataError("row " + std::to_string(r + 1) + ": expected " +
                        std::to_string(header.size()) + " fields, got " +
                        std::to_string(rows[r].size()));
      }
      ReviewExample ex;
      ex.id = rows[r][id_col];
      ex.text = rows[r][text_col];
      ex.label = map_label(schema, task, rows[r][label_col], r + 1);
      validate_example(ex, r + 1, seen_ids);
      examples.push_back(std::move(ex));
    }
  } else {
    std::size_t row_number = 0;
    for (const Json& j : read_jsonl(path)) {
      ++row_number;
      ReviewExample ex;
      ex.id = j.value(schema.id_column, std::string());
      ex.text = j.value(schema.text_column, std::string());
      ex.label = map_label(schema, task,
                           j.value(schema.label_column, std::string()),
                           row_number);
      validate_example(ex, row_number, seen_ids);
      examples.push_back(std::move(ex));
    }
  }

  if (spec.min_word_count > 0) {
    std::erase_if(examples, [&](const ReviewExample& ex) {
      return ex.word_count < spec.min_word_count;
    });
  }

  if (spec.per_class_cap > 0) {
    // Seeded subset per label class; survivors keep their input order.
    std::map<std::string, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < examples.size(); ++i) {
      by_label[examples[i].label].push_back(i);
    }
    std::set<std::size_t> keep;
    for (auto& [label, indices] : by_label) {
      Rng rng = make_rng(stable_hash(spec.seed, "class-cap", label));
      stable_shuffle(indices, rng);
      const std::size_t take = std::min(spec.per_class_cap, indices.size());
      keep.insert(indices.begin(),
                  indices.begin() + static_cast<std::ptrdiff_t>(take));
    }
    std::vector<ReviewExample> capped;
    capped.reserve(keep.size());
    for (std::size_t i : keep) capped.push_back(std::move(examples[i]));
    examples = std::move(capped);
  }

  return examples;
}

void assign_splits(std::vector<ReviewExample>& examples, const SplitSpec& spec) {
  const double total = spec.train_fraction + spec.validation_fraction +
                       spec.test_fraction;
  if (std::fabs(total - 1.0) > 1e-9) {
    throw DomainError("split fractions must sum to 1");
  }
  const std::size_t n = examples.size();
  // The 1e-9 nudge keeps exact-looking products like 2000 * 0.2 from
  // flooring one short of the intended count.
  auto count = [n](double fraction) {
    return static_cast<std::size_t>(
        std::floor(fraction * static_cast<double>(n) + 1e-9));
  };
  std::size_t n_train = count(spec.train_fraction);
  const std::size_t n_val = count(spec.validation_fraction);
  const std::size_t n_test = count(spec.test_fraction);
  n_train += n - (n_train + n_val + n_test);  // remainder goes to train

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = make_rng(stable_hash(spec.seed, "split"));
  stable_shuffle(order, rng);

  for (std::size_t pos = 0; pos < n; ++pos) {
    std::string split;
    if (pos < n_train) {
      split = "train";
    } else if (pos < n_train + n_val) {
      split = "validation";
    } else {
      split = "test";
    }
    examples[order[pos]].split = split;
  }
}

void write_canonical(const std::filesystem::path& path,
                     const std::vector<ReviewExample>& examples) {
  std::vector<Json> lines;
  lines.reserve(examples.size());
  for (const ReviewExample& ex : examples) {
    lines.push_back(Json{{"id", ex.id},
                         {"text", ex.text},
                         {"label", ex.label},
                         {"split", ex.split},
                         {"word_count", ex.word_count}});
  }
  write_jsonl(path, lines);
}

std::vector<ReviewExample> read_canonical(const std::filesystem::path& path) {
  std::vector<ReviewExample> examples;
  for (const Json& j : read_jsonl(path)) {
    ReviewExample ex;
    ex.id = j.at("id").get<std::string>();
    ex.text = j.at("text").get<std::string>();
    ex.label = j.at("label").get<std::string>();
    ex.split = j.value("split", std::string());
    ex.word_count = j.value("word_count", std::size_t{0});
    examples.push_back(std::move(ex));
  }
  return examples;
}

}  // namespace pex::datasets

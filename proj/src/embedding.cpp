#include "dpstyler/embedding.hpp"

#include <cctype>
#include <set>

namespace dpstyler {

namespace {

std::size_t count_occurrences(const std::string& text, const std::string& needle) {
  std::size_t count = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + needle.size())) {
    ++count;
  }
  return count;
}

}  // namespace

TaskDefinition::TaskDefinition(std::vector<std::string> class_names) : class_names_(std::move(class_names)) {
  if (class_names_.size() < 2) throw ContractError("task needs at least two classes");
  std::set<std::string> seen;
  for (const auto& name : class_names_) {
    if (name.empty()) throw ContractError("empty class name");
    if (!seen.insert(name).second) throw ContractError("duplicate class name '" + name + "'");
  }
}

std::size_t TaskDefinition::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < class_names_.size(); ++i) {
    if (class_names_[i] == name) return i;
  }
  throw ContractError("unknown class name '" + name + "'");
}

PromptTemplate::PromptTemplate(std::string pattern, std::string id, bool has_class, bool has_style)
    : pattern_(std::move(pattern)), id_(std::move(id)), has_class_(has_class), has_style_(has_style) {
  if (id_.empty()) id_ = slug(pattern_);
  const std::size_t classes = count_occurrences(pattern_, kClassPlaceholder);
  const std::size_t styles = count_occurrences(pattern_, kStylePlaceholder);
  if (classes != (has_class_ ? 1u : 0u)) {
    throw ContractError("template '" + pattern_ + "': expected " + (has_class_ ? "one" : "no") +
                        " [class] placeholder, found " + std::to_string(classes));
  }
  if (styles != (has_style_ ? 1u : 0u)) {
    throw ContractError("template '" + pattern_ + "': expected " + (has_style_ ? "one" : "no") +
                        " S* placeholder, found " + std::to_string(styles));
  }
}

PromptTemplate PromptTemplate::styled(std::string pattern, std::string id) {
  return PromptTemplate(std::move(pattern), std::move(id), true, true);
}

PromptTemplate PromptTemplate::content_only(std::string pattern, std::string id) {
  return PromptTemplate(std::move(pattern), std::move(id), true, false);
}

PromptTemplate PromptTemplate::style_only(std::string pattern, std::string id) {
  return PromptTemplate(std::move(pattern), std::move(id), false, true);
}

std::string PromptTemplate::fill_class(const std::string& class_name) const {
  if (!has_class_) return pattern_;
  std::string out = pattern_;
  const auto pos = out.find(kClassPlaceholder);
  out.replace(pos, std::char_traits<char>::length(kClassPlaceholder), class_name);
  return out;
}

std::string PromptTemplate::slug(const std::string& pattern) {
  std::string out;
  bool dash = false;
  for (unsigned char c : pattern) {
    if (std::isalnum(c)) {
      if (dash && !out.empty()) out.push_back('-');
      out.push_back(static_cast<char>(std::tolower(c)));
      dash = false;
    } else {
      dash = true;
    }
  }
  return out.empty() ? "template" : out;
}

std::vector<PromptTemplate> default_templates() {
  return {
      PromptTemplate::styled("a [class] in a S* style"),
      PromptTemplate::styled("a S* style of a [class]"),
      PromptTemplate::styled("a photo of a [class] with S* like style"),
  };
}

PromptTemplate style_probe_template() { return PromptTemplate::style_only("S*-like style", "style-probe"); }

}  // namespace dpstyler

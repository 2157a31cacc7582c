#include "cfrag/corpus.hpp"

#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "cfrag/errors.hpp"

namespace cfrag::corpus {

using nlohmann::json;

TaskId task_from_string(const std::string& name) {
  if (name == "LaMP-1") return TaskId::LaMP1;
  if (name == "LaMP-2") return TaskId::LaMP2;
  if (name == "LaMP-3") return TaskId::LaMP3;
  if (name == "LaMP-4") return TaskId::LaMP4;
  if (name == "LaMP-5") return TaskId::LaMP5;
  if (name == "LaMP-7") return TaskId::LaMP7;
  if (name == "synthetic") return TaskId::Synthetic;
  throw ConfigError("unknown task: " + name);
}

std::string task_to_string(TaskId task) {
  switch (task) {
    case TaskId::LaMP1: return "LaMP-1";
    case TaskId::LaMP2: return "LaMP-2";
    case TaskId::LaMP3: return "LaMP-3";
    case TaskId::LaMP4: return "LaMP-4";
    case TaskId::LaMP5: return "LaMP-5";
    case TaskId::LaMP7: return "LaMP-7";
    case TaskId::Synthetic: return "synthetic";
  }
  throw ConfigError("unknown task id");
}

const UserProfile& Dataset::profile(const std::string& user_id) const {
  for (const auto& p : profiles) {
    if (p.user_id == user_id) return p;
  }
  throw LookupError("unknown user: " + user_id);
}

namespace {

Document parse_document(const json& j, long line, int position) {
  Document doc;
  if (!j.contains("id") || !j["id"].is_string() || j["id"].get<std::string>().empty())
    throw ParseError("history document missing nonempty \"id\"", line);
  doc.id = j["id"].get<std::string>();
  if (!j.contains("text") || !j["text"].is_string())
    throw ParseError("history document missing \"text\"", line);
  doc.text = j["text"].get<std::string>();
  doc.position = j.value("position", position);
  if (j.contains("aux")) {
    for (const auto& [k, v] : j["aux"].items()) doc.aux[k] = v.get<std::string>();
  }
  return doc;
}

}  // namespace

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset: " + path);

  Dataset ds;
  std::unordered_set<std::string> doc_ids;
  std::unordered_set<std::string> user_ids;
  std::string line;
  long line_no = 0;
  long sample_counter = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
    }
    const std::string kind = j.value("kind", "");
    if (kind == "user") {
      UserProfile profile;
      if (!j.contains("id") || !j["id"].is_string())
        throw ParseError("user record missing \"id\"", line_no);
      profile.user_id = j["id"].get<std::string>();
      if (!user_ids.insert(profile.user_id).second)
        throw ParseError("duplicate user id: " + profile.user_id, line_no);
      if (!j.contains("history") || !j["history"].is_array() || j["history"].empty())
        throw ParseError("user record needs a nonempty \"history\" array", line_no);
      int pos = 0;
      int last_pos = -1;
      for (const auto& dj : j["history"]) {
        Document doc = parse_document(dj, line_no, pos);
        if (doc.position <= last_pos)
          throw ParseError("history positions must be strictly increasing", line_no);
        last_pos = doc.position;
        if (!doc_ids.insert(doc.id).second)
          throw ParseError("duplicate document id: " + doc.id, line_no);
        profile.history.push_back(std::move(doc));
        ++pos;
      }
      ds.profiles.push_back(std::move(profile));
    } else if (kind == "sample") {
      Sample s;
      if (!j.contains("user_id") || !j["user_id"].is_string())
        throw ParseError("sample record missing \"user_id\"", line_no);
      s.user_id = j["user_id"].get<std::string>();
      if (!j.contains("query")) throw ParseError("sample record missing \"query\"", line_no);
      s.query = j["query"].get<std::string>();
      s.target = j.value("target", "");
      s.task = task_from_string(j.value("task", "synthetic"));
      s.id = j.value("id", "s" + std::to_string(sample_counter));
      ++sample_counter;
      ds.samples.push_back(std::move(s));
    } else {
      throw ParseError("record \"kind\" must be \"user\" or \"sample\"", line_no);
    }
  }

  for (const auto& s : ds.samples) {
    if (!user_ids.count(s.user_id))
      throw IntegrityError("sample " + s.id + " references unknown user " + s.user_id);
  }
  return ds;
}

void save_dataset(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset: " + path);
  for (const auto& p : dataset.profiles) {
    json j;
    j["kind"] = "user";
    j["id"] = p.user_id;
    j["history"] = json::array();
    for (const auto& d : p.history) {
      json dj;
      dj["id"] = d.id;
      dj["text"] = d.text;
      dj["position"] = d.position;
      if (!d.aux.empty()) dj["aux"] = d.aux;
      j["history"].push_back(dj);
    }
    out << j.dump() << "\n";
  }
  for (const auto& s : dataset.samples) {
    json j;
    j["kind"] = "sample";
    j["id"] = s.id;
    j["user_id"] = s.user_id;
    j["query"] = s.query;
    j["target"] = s.target;
    j["task"] = task_to_string(s.task);
    out << j.dump() << "\n";
  }
}

std::vector<Document> truncate_history(const std::vector<Document>& history,
                                       std::size_t max_len) {
  if (history.size() <= max_len) return history;
  return std::vector<Document>(history.end() - static_cast<long>(max_len), history.end());
}

}  // namespace cfrag::corpus

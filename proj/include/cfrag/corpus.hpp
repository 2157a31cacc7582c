#pragma once

#include <map>
#include <string>
#include <vector>

namespace cfrag::corpus {

enum class TaskId { LaMP1, LaMP2, LaMP3, LaMP4, LaMP5, LaMP7, Synthetic };

TaskId task_from_string(const std::string& name);
std::string task_to_string(TaskId task);

struct Document {
  std::string id;
  std::string text;
  std::map<std::string, std::string> aux;  // e.g. "title"/"abstract"
  int position = 0;                        // index within its owner's history
};

struct UserProfile {
  std::string user_id;
  std::vector<Document> history;  // ordered by position, ascending
};

struct Sample {
  std::string id;
  std::string user_id;
  std::string query;
  std::string target;
  TaskId task = TaskId::Synthetic;
};

struct Dataset {
  std::vector<UserProfile> profiles;
  std::vector<Sample> samples;

  const UserProfile& profile(const std::string& user_id) const;
};

// JSON-lines dataset: one object per line, "kind" is "user" or "sample".
Dataset load_dataset(const std::string& path);
void save_dataset(const Dataset& dataset, const std::string& path);

// Keeps the most recent max_len documents when a history is longer.
std::vector<Document> truncate_history(const std::vector<Document>& history, std::size_t max_len);

}  // namespace cfrag::corpus

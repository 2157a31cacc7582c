#include "cfrag/prompts.hpp"

#include "cfrag/errors.hpp"

namespace cfrag::prompts {

namespace {

// Returns the aux field when present, otherwise the raw document text so the
// prompt never silently drops a history slot.
std::string aux_or_text(const corpus::Document& doc, const std::string& key) {
  auto it = doc.aux.find(key);
  return it != doc.aux.end() ? it->second : doc.text;
}

bool has_aux(const corpus::Document& doc, const std::string& a, const std::string& b = "") {
  if (!doc.aux.count(a)) return false;
  return b.empty() || doc.aux.count(b) > 0;
}

struct Template {
  // Instruction opening used when history is present; the zero-shot form
  // replaces it with `zero_head`.
  std::string head;
  std::string zero_head;
  std::string tail;  // appended after the user input
};

const Template& template_for(corpus::TaskId task) {
  static const Template lamp1{
      "Based on the historical profiles provided, please choose one of the following two "
      "references that is more relevant to the user's input title: ",
      "Please choose one of the following two references that is more relevant to the user's "
      "input title: ",
      " Please just answer with \"[1]\" or \"[2]\" without explanation."};
  static const Template lamp2{
      "Based on the historical profiles provided, please select the tag from [sci-fi, based on "
      "a book, comedy ...] that is most relevant to the user's input description. Please just "
      "answer with the tag name without explanation. \"description\": ",
      "Please select the tag from [sci-fi, based on a book, comedy ...] that is most relevant "
      "to the user's input description. Please just answer with the tag name without "
      "explanation. \"description\": ",
      "; \"tag\": "};
  static const Template lamp3{
      "Based on the historical profiles provided, what is the score of the following review on "
      "a scale of 1 to 5? just answer with 1, 2, 3, 4, or 5 without further explanation. "
      "\"review\": ",
      "What is the score of the following review on a scale of 1 to 5? just answer with 1, 2, "
      "3, 4, or 5 without further explanation. \"review\": ",
      "; \"score\": "};
  static const Template lamp4{
      "Based on the historical profiles provided, please generate a title for the given user's "
      "input text. Please generate it in the following format: {\"title\": \"generated "
      "title\"} without explanation, and use only English. \"text\": ",
      "Please generate a title for the given user's input text. Please generate it in the "
      "following format: {\"title\": \"generated title\"} without explanation, and use only "
      "English. \"text\": ",
      "; \"title\": "};
  static const Template lamp5{
      "Based on the historical profiles provided, please generate a title for the given user's "
      "input abstract. Please generate it in the following format: {\"title\": \"generated "
      "title\"} without explanation, and use only English. \"abstract\": ",
      "Please generate a title for the given user's input abstract. Please generate it in the "
      "following format: {\"title\": \"generated title\"} without explanation, and use only "
      "English. \"abstract\": ",
      "; \"title\": "};
  static const Template lamp7{
      "Based on the style pattern of the historical tweets provided, please paraphrase the "
      "user's input tweet without any explanation before or after it. Please generate it in "
      "the following format: {\"tweet\": \"generated tweet\"} without explanation, and use "
      "only English. \"tweet\": ",
      "Please paraphrase the user's input tweet without any explanation before or after it. "
      "Please generate it in the following format: {\"tweet\": \"generated tweet\"} without "
      "explanation, and use only English. \"tweet\": ",
      "."};
  static const Template synthetic{
      "Based on the historical profiles provided, please answer the user's query. \"query\": ",
      "Please answer the user's query. \"query\": ", "; \"answer\": "};
  switch (task) {
    case corpus::TaskId::LaMP1: return lamp1;
    case corpus::TaskId::LaMP2: return lamp2;
    case corpus::TaskId::LaMP3: return lamp3;
    case corpus::TaskId::LaMP4: return lamp4;
    case corpus::TaskId::LaMP5: return lamp5;
    case corpus::TaskId::LaMP7: return lamp7;
    case corpus::TaskId::Synthetic: return synthetic;
  }
  throw ConfigError("build_prompt: unknown task");
}

}  // namespace

std::string render_history_item(corpus::TaskId task, const corpus::Document& doc) {
  switch (task) {
    case corpus::TaskId::LaMP1:
      if (has_aux(doc, "title", "abstract"))
        return "\"title\": " + doc.aux.at("title") + " \"abstract\": " + doc.aux.at("abstract");
      break;
    case corpus::TaskId::LaMP2:
      if (has_aux(doc, "description", "tag"))
        return "\"description\": " + doc.aux.at("description") + "; \"tag\": " +
               doc.aux.at("tag");
      break;
    case corpus::TaskId::LaMP3:
      if (has_aux(doc, "review", "score"))
        return "\"review\": " + doc.aux.at("review") + " \"score\": " + doc.aux.at("score");
      break;
    case corpus::TaskId::LaMP4:
      if (has_aux(doc, "text", "title"))
        return "\"text\": " + doc.aux.at("text") + " \"title\": " + doc.aux.at("title");
      break;
    case corpus::TaskId::LaMP5:
      if (has_aux(doc, "abstract", "title"))
        return "\"abstract\": " + aux_or_text(doc, "abstract") + " \"title\": " +
               doc.aux.at("title");
      break;
    case corpus::TaskId::LaMP7:
      if (has_aux(doc, "tweet")) return "\"tweet\": " + doc.aux.at("tweet");
      break;
    case corpus::TaskId::Synthetic:
      break;
  }
  return doc.text;
}

std::string build_prompt(corpus::TaskId task, const std::string& query,
                         const std::vector<corpus::Document>& top_k) {
  if (query.empty()) throw ContractError("build_prompt: empty query");
  const Template& tpl = template_for(task);
  std::string prompt;
  if (!top_k.empty()) {
    prompt = "The historical profiles are as follows: ";
    for (std::size_t i = 0; i < top_k.size(); ++i) {
      if (i > 0) prompt += " ";
      prompt += render_history_item(task, top_k[i]);
    }
    prompt += ". ";
    prompt += tpl.head;
  } else {
    prompt += tpl.zero_head;
  }
  prompt += query;
  prompt += tpl.tail;
  return prompt;
}

}  // namespace cfrag::prompts

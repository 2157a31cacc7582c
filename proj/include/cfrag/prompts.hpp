#pragma once

#include <string>
#include <vector>

#include "cfrag/corpus.hpp"

namespace cfrag::prompts {

// One history slot rendered for the prompt, using the task's aux-field
// layout when the document carries those fields.
std::string render_history_item(corpus::TaskId task, const corpus::Document& doc);

// Task template filled with the ranked documents followed by the user input.
// With no documents the zero-shot form is produced: no history preamble and
// no reference to historical profiles.
std::string build_prompt(corpus::TaskId task, const std::string& query,
                         const std::vector<corpus::Document>& top_k);

}  // namespace cfrag::prompts

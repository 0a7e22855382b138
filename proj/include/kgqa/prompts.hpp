#pragma once

#include <string_view>

// Fixed prompt payloads sent to the text-generation endpoint.
namespace kgqa::prompts {

/// Placeholders: {entity_h} {predicate_T} {entity_t} {topic_entity} {answer_entity}
extern const std::string_view kQuestionPrompt;
extern const std::string_view kSystemPrompt;
extern const std::string_view kExploreToolPrompt;
extern const std::string_view kGroundToolPrompt;
extern const std::string_view kSynthesisToolPrompt;

}  // namespace kgqa::prompts

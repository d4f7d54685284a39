#pragma once

#include <string>
#include <vector>

namespace debias {

struct ChatMessage {
    std::string role;  // system | user | assistant
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

using Messages = std::vector<ChatMessage>;

}  // namespace debias

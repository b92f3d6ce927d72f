#pragma once

#include <memory>
#include <string>
#include <string_view>

#include "jitagent/common.hpp"
#include "jitagent/script/ast.hpp"

namespace jitagent::script {

class ScriptSyntaxError : public Error {
public:
    ScriptSyntaxError(Pos pos, const std::string& message)
        : Error("SyntaxError", message + " (" + std::to_string(pos.line) + ":" + std::to_string(pos.column) + ")"),
          pos_(pos),
          bare_(message) {}

    Pos pos() const noexcept { return pos_; }
    const std::string& bare_message() const noexcept { return bare_; }

private:
    Pos pos_;
    std::string bare_;
};

// Parses a whole action-code script. Throws ScriptSyntaxError.
std::unique_ptr<Program> parse(std::string_view source);

}  // namespace jitagent::script

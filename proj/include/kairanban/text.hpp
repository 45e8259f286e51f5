#pragma once

#include <string>
#include <string_view>
#include <vector>

// Small string helpers shared by the prompting and dataset code.
namespace kairanban::text {

std::string_view trim(std::string_view s) noexcept;
std::string to_lower(std::string_view s);

/// Splits on '\n' and drops a trailing '\r' from every line.
std::vector<std::string> split_lines(std::string_view s);

bool is_valid_utf8(std::string_view s) noexcept;
std::string latin1_to_utf8(std::string_view s);

/// Text up to and including the first '.', '!' or '?' followed by whitespace
/// or end of input; the whole trimmed text when there is no terminator.
std::string first_sentence(std::string_view s);

/// Fixed four-decimal rendering used inside prompts.
std::string format_prob(double v);

std::string read_file(const std::string& path);

}  // namespace kairanban::text

#pragma once

namespace kairanban::detail {

extern const char* const kDefaultKcsTemplate;
extern const char* const kDefaultIbcTemplate;
extern const char* const kDefaultSingleTemplate;
extern const char* const kDefaultJudgeTemplate;

}  // namespace kairanban::detail

#pragma once

#include <array>
#include <string>
#include <string_view>

namespace mtpd {

enum class Task { det, da, lane };

inline constexpr std::array<Task, 3> all_tasks{Task::det, Task::da, Task::lane};
inline constexpr std::size_t task_count = all_tasks.size();

std::string_view task_name(Task t);
/// Throws ConfigError for anything but "det", "da" or "lane".
Task parse_task(std::string_view name);

template <typename T>
using PerTask = std::array<T, task_count>;

inline std::size_t task_index(Task t) { return static_cast<std::size_t>(t); }

}  // namespace mtpd

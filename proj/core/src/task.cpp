#include "mtpd/task.hpp"

#include "mtpd/error.hpp"

namespace mtpd {

std::string_view task_name(Task t) {
    switch (t) {
        case Task::det: return "det";
        case Task::da: return "da";
        case Task::lane: return "lane";
    }
    return "?";
}

Task parse_task(std::string_view name) {
    for (Task t : all_tasks) {
        if (task_name(t) == name) return t;
    }
    throw ConfigError("unknown task '" + std::string(name) + "'");
}

}  // namespace mtpd

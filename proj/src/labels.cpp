#include "lamar/labels.hpp"

#include "lamar/error.hpp"

namespace lamar {

std::string to_string(Label label) {
  switch (label) {
    case Label::kTrue: return "true";
    case Label::kMiscaptioned: return "mc";
    case Label::kOutOfContext: return "ooc";
  }
  return "unknown";
}

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "unknown";
}

std::string to_string(Task task) {
  switch (task) {
    case Task::kMiscaptioned: return "mc";
    case Task::kOutOfContext: return "ooc";
    case Task::kMulticlass: return "multi";
  }
  return "unknown";
}

Label parse_label(const std::string& text) {
  if (text == "true") return Label::kTrue;
  if (text == "mc") return Label::kMiscaptioned;
  if (text == "ooc") return Label::kOutOfContext;
  throw Error(ErrorCode::kInvalidArgument, "label: unknown label '" + text + "'");
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::kTrain;
  if (text == "val") return Split::kVal;
  if (text == "test") return Split::kTest;
  throw Error(ErrorCode::kInvalidArgument, "split: unknown split '" + text + "'");
}

Task parse_task(const std::string& text) {
  if (text == "mc") return Task::kMiscaptioned;
  if (text == "ooc") return Task::kOutOfContext;
  if (text == "multi") return Task::kMulticlass;
  throw Error(ErrorCode::kInvalidArgument, "task: unknown task '" + text + "'");
}

std::size_t output_width(Task task) { return task == Task::kMulticlass ? 3 : 1; }
std::size_t class_count(Task task) { return task == Task::kMulticlass ? 3 : 2; }

bool label_in_task(Label label, Task task) {
  switch (task) {
    case Task::kMiscaptioned: return label != Label::kOutOfContext;
    case Task::kOutOfContext: return label != Label::kMiscaptioned;
    case Task::kMulticlass: return true;
  }
  return false;
}

int task_target(Label label, Task task) {
  if (!label_in_task(label, task)) {
    throw Error(ErrorCode::kInvalidArgument,
                "task: label '" + to_string(label) + "' outside the alphabet of task '" +
                    to_string(task) + "'");
  }
  if (task == Task::kMulticlass) return static_cast<int>(label);
  return label == Label::kTrue ? 0 : 1;
}

Label task_label(int class_index, Task task) {
  if (class_index < 0 || static_cast<std::size_t>(class_index) >= class_count(task)) {
    throw Error(ErrorCode::kInvalidArgument,
                "task: class index " + std::to_string(class_index) + " out of range");
  }
  switch (task) {
    case Task::kMiscaptioned: return class_index == 0 ? Label::kTrue : Label::kMiscaptioned;
    case Task::kOutOfContext: return class_index == 0 ? Label::kTrue : Label::kOutOfContext;
    case Task::kMulticlass: return static_cast<Label>(class_index);
  }
  return Label::kTrue;
}

}  // namespace lamar

#pragma once

#include <cstdint>
#include <string>

namespace lamar {

enum class Label : std::uint8_t { kTrue = 0, kMiscaptioned = 1, kOutOfContext = 2 };
enum class Split : std::uint8_t { kTrain = 0, kVal = 1, kTest = 2 };

// True vs MC, True vs OOC, or all three classes.
enum class Task { kMiscaptioned, kOutOfContext, kMulticlass };

inline constexpr int kNumLabels = 3;
inline constexpr int kNumSplits = 3;

std::string to_string(Label label);
std::string to_string(Split split);
std::string to_string(Task task);
Label parse_label(const std::string& text);
Split parse_split(const std::string& text);
Task parse_task(const std::string& text);

// Number of detector outputs: 1 for the binary tasks, 3 for multiclass.
std::size_t output_width(Task task);
// Number of classes the task distinguishes (2 or 3).
std::size_t class_count(Task task);
bool label_in_task(Label label, Task task);
// Class index used by the loss: binary tasks map the falsified label to 1.
int task_target(Label label, Task task);
Label task_label(int class_index, Task task);

}  // namespace lamar

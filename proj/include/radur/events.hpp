#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace radur {

using ClassId = std::string;

/// One annotated occurrence; times in seconds.
struct Event {
  double onset = 0.0;
  double offset = 0.0;
  ClassId label;

  double duration() const { return offset - onset; }
  bool operator==(const Event&) const = default;
};

using EventList = std::vector<Event>;

class InvalidAnnotation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Events of one class, sorted by onset.
EventList events_of_class(const EventList& events, const ClassId& label);

void sort_by_onset(EventList& events);

}  // namespace radur

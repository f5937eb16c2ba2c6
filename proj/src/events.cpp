#include "radur/events.hpp"

#include <algorithm>

namespace radur {

EventList events_of_class(const EventList& events, const ClassId& label) {
  EventList out;
  std::copy_if(events.begin(), events.end(), std::back_inserter(out),
               [&](const Event& e) { return e.label == label; });
  sort_by_onset(out);
  return out;
}

void sort_by_onset(EventList& events) {
  std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    return a.onset < b.onset || (a.onset == b.onset && a.offset < b.offset);
  });
}

}  // namespace radur

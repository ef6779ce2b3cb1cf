// Copyright 2026 The Churnet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CHURNET_CUSTOMER_REGISTRY_H_
#define CHURNET_CUSTOMER_REGISTRY_H_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "absl/container/flat_hash_map.h"

namespace churnet {

// Dense handle for an external customer identifier. Handles are assigned by a
// CustomerRegistry in first-seen order and are only meaningful relative to
// the registry that issued them.
struct CustomerId {
  uint32_t value = 0;

  friend auto operator<=>(const CustomerId&, const CustomerId&) = default;

  template <typename H>
  friend H AbslHashValue(H h, const CustomerId& id) {
    return H::combine(std::move(h), id.value);
  }
};

// Interns external customer identifiers (phone numbers, hashed MSISDNs, ...).
class CustomerRegistry {
 public:
  CustomerId Intern(std::string_view external_id);

  // Returns false when the id has never been interned.
  bool Find(std::string_view external_id, CustomerId* out) const;

  const std::string& Name(CustomerId id) const { return names_[id.value]; }
  size_t size() const { return names_.size(); }

 private:
  std::vector<std::string> names_;
  absl::flat_hash_map<std::string, uint32_t> index_;
};

}  // namespace churnet

#endif  // CHURNET_CUSTOMER_REGISTRY_H_

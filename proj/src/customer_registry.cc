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

#include "churnet/customer_registry.h"

namespace churnet {

CustomerId CustomerRegistry::Intern(std::string_view external_id) {
  auto [it, inserted] = index_.try_emplace(
      std::string(external_id), static_cast<uint32_t>(names_.size()));
  if (inserted) names_.emplace_back(external_id);
  return CustomerId{it->second};
}

bool CustomerRegistry::Find(std::string_view external_id,
                            CustomerId* out) const {
  auto it = index_.find(
      absl::string_view(external_id.data(), external_id.size()));
  if (it == index_.end()) return false;
  *out = CustomerId{it->second};
  return true;
}

}  // namespace churnet

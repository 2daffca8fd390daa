#pragma once

#include <array>
#include <string>

#include "symmflow/data/dataset.hpp"

namespace symmflow {

// Loads the three splits from a MedMNIST-style npz archive. Entries
// {train,val,test}_{images,labels} are required; pixel bytes rescale to
// [-1, 1] and label column vectors flatten to class indices. Sample order is
// preserved exactly.
std::array<LabeledImageDataset<float>, 3> load_medmnist(const std::string& path);

}  // namespace symmflow

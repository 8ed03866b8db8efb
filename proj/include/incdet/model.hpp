#pragma once

#include <string>
#include <vector>

#include "incdet/checkpoint.hpp"
#include "incdet/codec.hpp"
#include "incdet/rng.hpp"
#include "incdet/tensor.hpp"

namespace incdet {

// Network geometry. Input 64x64 RGB; features at stride 4 with 32 channels.
constexpr int kModelInputSize = 64;
constexpr int kFeatureChannels = 32;
constexpr int kFeatureStride = 4;
constexpr int kGnGroups = 8;
// Fixed gain on the size head so pixel-scale extents come from O(1) codes.
constexpr double kSizeOutputGain = 16.0;

/// Four stride-2 conv blocks (3->16->32->64->64, each conv + groupnorm +
/// relu), 64x64 input down to a 4x4x64 bottleneck. Shared topology between
/// the feature extractor and the code generator, which starts from a clone
/// of these weights.
struct Encoder {
  Tensor w1, w2, w3, w4;

  static Encoder init(Rng& rng);
  Encoder clone_weights() const;
  Tensor forward(const Tensor& images, Tape* tape = nullptr) const;  // [N,3,64,64] -> [N,64,4,4]
  std::vector<Tensor> params() const;
  void save_into(Checkpoint& cp, const std::string& prefix) const;
  void load_from(const Checkpoint& cp, const std::string& prefix);
};

/// Class-agnostic feature network f: encoder + two stride-2 transposed-conv
/// blocks (64->48->32) back up to stride 4. Frozen after Stage I.
class FeatureExtractor {
 public:
  static FeatureExtractor init(Rng& rng);

  // [N,3,64,64] -> [N,32,16,16]; throws if input dims are not divisible by
  // the output stride (i.e. not the expected 64x64).
  Tensor forward(const Tensor& images, Tape* tape = nullptr) const;

  std::vector<Tensor> params() const;
  void freeze();  // marks every weight frozen; later gradients hard-fail
  bool frozen() const;

  void save_into(Checkpoint& cp, const std::string& prefix) const;
  static FeatureExtractor load_from(const Checkpoint& cp, const std::string& prefix);

  Encoder encoder;
  Tensor dw1, dw2;  // transposed-conv weights [in,out,2,2]
};

/// Per-class locator codes: three 1x1-conv kernels over the feature map.
struct ClassCode {
  Tensor centre;  // [c]
  Tensor width;   // [c]
  Tensor height;  // [c]

  static ClassCode init(Rng& rng);
  static ClassCode zeros();
  ClassCode clone() const;
};

/// Class-agnostic sub-cell offset codes, learned in Stage I.
struct SharedCodes {
  Tensor offset_x;  // [c]
  Tensor offset_y;  // [c]

  static SharedCodes init(Rng& rng);
  SharedCodes clone() const;
};

struct LocateOutput {
  Tensor centre;  // [N,1,H,W], sigmoid-activated
  Tensor size;    // [N,2,H,W], linear (width, height)
  Tensor offset;  // [N,2,H,W], linear (dx, dy)
};

// The object locator h: per-channel 1x1 convolutions of the feature map with
// the code vectors. Pure per-class computation — no cross-class coupling.
LocateOutput locate(const Tensor& m, const ClassCode& code,
                    const SharedCodes& shared, Tape* tape = nullptr);

/// Code generator g: cloned encoder plus three pooled 1x1-conv heads. Maps a
/// set of object crops to a ClassCode in one forward pass.
class CodeGenerator {
 public:
  static CodeGenerator init_from(const Encoder& extractor_encoder, Rng& rng);

  // crops: [B,3,64,64] (one row per support box crop). The code is the mean
  // over crops of each head's globally pooled output — permutation
  // invariant by construction.
  ClassCode generate(const Tensor& crops, Tape* tape = nullptr) const;

  std::vector<Tensor> params() const;
  void save_into(Checkpoint& cp, const std::string& prefix) const;
  static CodeGenerator load_from(const Checkpoint& cp, const std::string& prefix);

  Encoder encoder;
  Tensor head_centre, head_width, head_height;  // [c,64,1,1]
};

// One support box -> one generator input: crop padded by 10% per side,
// clamped to the image, bilinearly resized to 64x64. Returns [3,64,64].
// Throws std::invalid_argument on a degenerate (empty after clamping) crop.
Tensor crop_resize(const Tensor& image, const BoxAnnotation& box);

/// Annotated examples of one class, as handed to enrolment.
struct SupportSet {
  struct Sample {
    Tensor image;  // [3,H,W]
    std::vector<BoxAnnotation> boxes;  // boxes of class_id within that image
  };
  int class_id = 0;
  std::vector<Sample> samples;
};

// Crops every support box and feeds the batch through the generator.
// Degenerate crops are skipped with a warning on stderr; an empty support
// set, or one where every crop is degenerate, throws std::invalid_argument.
ClassCode generate_code(const CodeGenerator& g, const SupportSet& support,
                        Tape* tape = nullptr);

// Stacks [C,H,W] tensors into [B,C,H,W].
Tensor stack_images(const std::vector<Tensor>& images);

}  // namespace incdet

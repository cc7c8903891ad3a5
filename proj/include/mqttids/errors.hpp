#pragma once

#include <stdexcept>
#include <string>

namespace mqttids {

// Base for all typed errors raised by the toolkit.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// mqtt_codec
struct MalformedLength : Error { using Error::Error; };
struct UnknownPacketType : Error { using Error::Error; };
struct TruncatedPacket : Error { using Error::Error; };
struct InvalidUtf8 : Error { using Error::Error; };
struct MalformedPacket : Error { using Error::Error; };
struct OversizedPacket : Error { using Error::Error; };
struct InvalidFilter : Error { using Error::Error; };

// traffic_lab
struct InvalidScenario : Error { using Error::Error; };
struct IoFailure : Error { using Error::Error; };

// dataset_pipeline
struct EmptyClass : Error { using Error::Error; };
struct SchemaMismatch : Error { using Error::Error; };
struct TooFewRows : Error { using Error::Error; };

// feature_selection
struct LengthMismatch : Error { using Error::Error; };
struct KOutOfRange : Error { using Error::Error; };
struct EmptySubset : Error { using Error::Error; };

// gbdt
struct DegenerateData : Error { using Error::Error; };

// recurrent_net
struct ShapeMismatch : Error { using Error::Error; };
struct NonFiniteLoss : Error { using Error::Error; };

}  // namespace mqttids

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "fastpay/types.hpp"

namespace fastpay {

// Ed25519 via libsodium; SHA-256 is the project-wide hash.
struct PublicKey {
    static constexpr std::size_t kSize = 32;
    std::array<std::uint8_t, kSize> bytes{};

    std::string hex() const { return to_hex(bytes); }
    static PublicKey from_hex(std::string_view hex) { return PublicKey{array_from_hex<kSize>(hex)}; }

    friend auto operator<=>(const PublicKey&, const PublicKey&) = default;
};

struct Signature {
    static constexpr std::size_t kSize = 64;
    std::array<std::uint8_t, kSize> bytes{};

    std::string hex() const { return to_hex(bytes); }
    static Signature from_hex(std::string_view hex) { return Signature{array_from_hex<kSize>(hex)}; }

    friend auto operator<=>(const Signature&, const Signature&) = default;
};

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::span<const std::uint8_t> data);

class KeyPair {
public:
    static constexpr std::size_t kSeedSize = 32;

    static KeyPair generate();
    static KeyPair from_seed(std::span<const std::uint8_t, kSeedSize> seed);
    // Deterministic key for tests and the simulator.
    static KeyPair from_label(std::string_view label);

    KeyPair(const KeyPair&) = default;
    KeyPair& operator=(const KeyPair&) = default;
    ~KeyPair();

    const PublicKey& public_key() const noexcept { return public_; }
    std::array<std::uint8_t, kSeedSize> seed() const;

    Signature sign(std::span<const std::uint8_t> message) const;

private:
    KeyPair() = default;

    PublicKey public_;
    std::array<std::uint8_t, 64> secret_{};
};

bool verify(const PublicKey& key, std::span<const std::uint8_t> message, const Signature& signature);

Address address_of(const PublicKey& key);

}  // namespace fastpay

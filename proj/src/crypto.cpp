#include "fastpay/crypto.hpp"

#include <sodium.h>

#include <cstring>

namespace fastpay {

namespace {

void init_sodium()
{
    static const bool ready = [] {
        if (sodium_init() < 0) {
            throw std::runtime_error("libsodium initialisation failed");
        }
        return true;
    }();
    (void)ready;
}

}  // namespace

Digest sha256(std::span<const std::uint8_t> data)
{
    init_sodium();
    Digest out{};
    crypto_hash_sha256(out.data(), data.data(), data.size());
    return out;
}

KeyPair KeyPair::generate()
{
    init_sodium();
    KeyPair kp;
    crypto_sign_ed25519_keypair(kp.public_.bytes.data(), kp.secret_.data());
    return kp;
}

KeyPair KeyPair::from_seed(std::span<const std::uint8_t, kSeedSize> seed)
{
    init_sodium();
    KeyPair kp;
    crypto_sign_ed25519_seed_keypair(kp.public_.bytes.data(), kp.secret_.data(), seed.data());
    return kp;
}

KeyPair KeyPair::from_label(std::string_view label)
{
    auto seed = sha256(std::span(reinterpret_cast<const std::uint8_t*>(label.data()), label.size()));
    return from_seed(seed);
}

KeyPair::~KeyPair()
{
    sodium_memzero(secret_.data(), secret_.size());
}

std::array<std::uint8_t, KeyPair::kSeedSize> KeyPair::seed() const
{
    std::array<std::uint8_t, kSeedSize> out{};
    crypto_sign_ed25519_sk_to_seed(out.data(), secret_.data());
    return out;
}

Signature KeyPair::sign(std::span<const std::uint8_t> message) const
{
    Signature sig;
    crypto_sign_ed25519_detached(sig.bytes.data(), nullptr, message.data(), message.size(), secret_.data());
    return sig;
}

bool verify(const PublicKey& key, std::span<const std::uint8_t> message, const Signature& signature)
{
    init_sodium();
    return crypto_sign_ed25519_verify_detached(
               signature.bytes.data(), message.data(), message.size(), key.bytes.data()) == 0;
}

Address address_of(const PublicKey& key)
{
    return Address{sha256(key.bytes)};
}

}  // namespace fastpay

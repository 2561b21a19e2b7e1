#pragma once

#include <stdexcept>
#include <string>

#include <openssl/evp.h>

namespace veriforest {

// git-style blob hash: sha1("blob <len>\0" + content), hex-encoded.
inline std::string git_blob_hash(const std::string& content) {
    std::string blob = "blob " + std::to_string(content.size());
    blob.push_back('\0');
    blob += content;

    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!EVP_Digest(blob.data(), blob.size(), digest, &len, EVP_sha1(), nullptr))
        throw std::runtime_error("git_blob_hash: digest failed");

    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

} // namespace veriforest

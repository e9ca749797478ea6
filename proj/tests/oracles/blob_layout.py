#!/usr/bin/env python3
"""Independent encoder for the attestation blob layout; prints golden encodings."""
import struct

from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey


def pack_bits(bits):
    out = bytearray((len(bits) + 7) // 8)
    for i, b in enumerate(bits):
        if b:
            out[i // 8] |= 1 << (i % 8)
    return bytes(out)


def trace(addrs, bits):
    out = struct.pack("<I", len(addrs)) + b"".join(struct.pack("<Q", a) for a in addrs)
    return out + struct.pack("<I", len(bits)) + pack_bits(bits)


def blob(kind, op, seg, prev, nonce, addrs, bits, h, f, ctx, irqs):
    out = struct.pack("<BBII", 1, kind, op, seg) + prev + nonce + trace(addrs, bits) + h
    out += struct.pack("<B", f)
    if f:
        out += struct.pack("<B", len(ctx)) + b"".join(struct.pack("<QQ", v, r) for v, r in ctx)
    out += struct.pack("<H", len(irqs))
    for irq, handler, a, b, hh in irqs:
        out += struct.pack("<IQ", irq, handler) + trace(a, b) + hh
    return out


if __name__ == "__main__":
    empty = blob(1, 1, 0, bytes(32), bytes(16), [], [], bytes(32), 0, [], [])
    print("empty_unsigned", empty.hex())
    rich = blob(0, 7, 2, b"\x11" * 32, bytes(range(16)), [0x1000, 0xDEADBEEF],
                [1, 0, 1, 1, 0, 0, 0, 0, 1], b"\x22" * 32, 1, [(0x10000000, 0x1008)],
                [(3, 0x1040, [], [1], b"\x33" * 32)])
    print("rich_unsigned", rich.hex())
    key = Ed25519PrivateKey.from_private_bytes(b"\x11" * 32)
    print("empty_signature", key.sign(empty).hex())
    print("rich_signature", key.sign(rich).hex())

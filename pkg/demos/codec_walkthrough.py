"""Walk through the variable-rate ternary codec.

Signed integers are grouped into classes of codeword length 0, 1, 2, ...
bits; a codeword is the binary rank of the integer inside its class, and a
parse symbol "p" terminates each one. Streams therefore use a three-letter
alphabet and every symbol costs log2(3) bits.
"""

import math

from subspaceq import codec

print("class sizes double with each extra digit:")
for n in [0, 1, -1, 2, -3, 7, -7, -10, 100]:
    word = codec.encode_integer(n)
    print(f"  {n:5d} -> class {codec.partition_index(n)}, codeword {word!r}")

seq = [7, -10, 2, 0]
stream = codec.encode_sequence(seq)
print(f"\nencode {seq}:")
print(f"  symbols  = {stream.symbols}")
print(f"  cost     = {stream.bit_cost:.4f} bits "
      f"({len(stream.symbols)} symbols x log2(3) = "
      f"{len(stream.symbols) * math.log2(3):.4f})")
print(f"  decoded  = {codec.decode_sequence(stream)}")

print("\ntermwise accounting:")
total = 0
for n in seq:
    digits = len(codec.encode_integer(n))
    bits = math.log2(3) * (digits + 1)
    total += bits
    print(f"  {n:5d}: {digits} digits + terminator = {bits:.4f} bits")
print(f"  sum = {total:.4f} bits")

print("\nlarge magnitudes stay cheap, the length grows logarithmically:")
for n in (10, 1000, 10**6, 10**9):
    print(f"  {n:>10d}: {len(codec.encode_integer(n))} digits")

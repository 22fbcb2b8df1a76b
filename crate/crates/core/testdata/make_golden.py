"""Writes the golden fixtures with Python's struct module, independent of the Rust code."""
import json
import struct
from pathlib import Path

from PIL import Image

HERE = Path(__file__).parent


def tensor(dtype_code, fmt, shape, values):
    out = b"UFT1" + bytes([dtype_code, len(shape)])
    out += b"".join(struct.pack("<Q", d) for d in shape)
    out += b"".join(struct.pack("<" + fmt, v) for v in values)
    return out


(HERE / "features_f32.uft").write_bytes(tensor(0, "f", (2, 3, 2), [i * 0.5 - 1.0 for i in range(12)]))
(HERE / "depth_f64.uft").write_bytes(tensor(1, "d", (2, 2), [1.0, 1.5, 2.25, 0.0]))
(HERE / "labels_u16.uft").write_bytes(tensor(2, "H", (2, 3), [0, 1, 2, 65535, 7, 300]))

POINTS = [
    ((0.0, 0.5, -1.0), (0.25, -2.0), 1),
    ((1.5, -0.75, 2.0), (1.0, 0.125), 0),
    ((-3.0, 4.0, 0.0625), (-0.5, 8.0), 65535),
]
HEADER = (
    "ply\nformat {fmt} 1.0\nelement vertex 3\n"
    "property float x\nproperty float y\nproperty float z\n"
    "property float f0\nproperty float f1\nproperty ushort label\nend_header\n"
)
binary = HEADER.format(fmt="binary_little_endian").encode()
for pos, feat, label in POINTS:
    binary += struct.pack("<5fH", *pos, *feat, label)
(HERE / "cloud_binary.ply").write_bytes(binary)
ascii_body = "".join(" ".join(str(v) for v in (*pos, *feat, label)) + "\n" for pos, feat, label in POINTS)
(HERE / "cloud_ascii.ply").write_text(HEADER.format(fmt="ascii") + ascii_body)

(HERE / "masks.json").write_text(json.dumps({
    "view_id": "v0",
    "height": 4,
    "width": 4,
    "masks": [{"rle": [3, 2, 11]}, {"rle": [0, 16]}, {"rle": [3, 2, 10]}, {"rle": [0, 8, 8]}],
}))

(HERE / "camera.json").write_text(json.dumps({
    "fl_x": 50.0, "fl_y": 52.0, "cx": 31.5, "cy": 23.5, "w": 64, "h": 48,
    "transform": [0.0, 0.0, 1.0, 2.0,
                  0.0, 1.0, 0.0, 0.5,
                  -1.0, 0.0, 0.0, -1.0,
                  0.0, 0.0, 0.0, 1.0],
    "convention": "-z forward, +y up",
}))

img = Image.new("I;16", (3, 2))
img.putdata([0, 1, 2, 65535, 7, 300])
img.save(HERE / "labels16.png")

"""Architecture tables for the reference encoder/decoder family.

The encoder slices are the five prefixes of the VGG-19 feature stack cut at
the pooling layers; each decoder mirrors its slice with nearest-neighbor
upsampling in place of pooling and a linear final conv back to RGB.  Layer
names follow the usual convention (conv1_1, relu1_1, pool1, ...; decoders use
dconv/drelu/up prefixes).
"""

VGG_BLOCKS = (2, 2, 4, 4, 4)
VGG_WIDTH = (64, 128, 256, 512, 512)

ENCODER_PREFIX = "encoder."
DECODER_PREFIX = "decoder."

CHECKPOINT_FORMAT = "substyle-reference-v1"


def conv_plan(level):
    """Encoder items up to pool `level`: ("conv", b, i, cin, cout) / ("pool", b)."""
    if not 1 <= level <= 5:
        raise ValueError(f"level must be 1..5, got {level}")
    plan = []
    cin = 3
    for b in range(1, level + 1):
        width = VGG_WIDTH[b - 1]
        for i in range(1, VGG_BLOCKS[b - 1] + 1):
            plan.append(("conv", b, i, cin, width))
            cin = width
        plan.append(("pool", b))
    return plan


def encoder_layers(level):
    """Ordered (name, kind, weight_shape) for enc{level}.

    kind is one of "conv", "relu", "pool"; weight_shape is (cout, cin, 3, 3)
    for convs and None for parameter-free layers.
    """
    layers = []
    for item in conv_plan(level):
        if item[0] == "pool":
            layers.append((f"pool{item[1]}", "pool", None))
        else:
            _, b, i, cin, cout = item
            layers.append((f"conv{b}_{i}", "conv", (cout, cin, 3, 3)))
            layers.append((f"relu{b}_{i}", "relu", None))
    return layers


def decoder_layers(level):
    """Ordered (name, kind, weight_shape) for dec{level}.

    The decoder runs the encoder plan in reverse: pools become nearest
    upsamples and each conv is mirrored channel-wise.  The mirrored conv1_1
    produces the RGB output and is linear (no trailing relu).
    """
    plan = conv_plan(level)
    layers = []
    for pos, item in enumerate(reversed(plan)):
        if item[0] == "pool":
            layers.append((f"up{item[1]}", "up", None))
        else:
            _, b, i, cin, cout = item
            layers.append((f"dconv{b}_{i}", "conv", (cin, cout, 3, 3)))
            if pos != len(plan) - 1:
                layers.append((f"drelu{b}_{i}", "relu", None))
    return layers


def checkpoint_keys():
    """Expected checkpoint state keys mapped to tensor shapes.

    Every conv contributes "<tower>.<name>.weight" and "<tower>.<name>.bias";
    parameter-free layers are implied by the architecture and carry no keys.
    """
    keys = {}
    for prefix, layers in ((ENCODER_PREFIX, encoder_layers(5)),
                           (DECODER_PREFIX, decoder_layers(5))):
        for name, kind, shape in layers:
            if kind != "conv":
                continue
            keys[f"{prefix}{name}.weight"] = shape
            keys[f"{prefix}{name}.bias"] = (shape[0],)
    return keys

"""Input-channel variants for the wind regressor.

Each variant names the scene channels stacked (in order) into the network
input.  The label is always the model wind field; the co-polarised
backscatter is the workhorse input, with incidence angle, the wind
direction prior, the cross-pol channel and the first-guess wind added in
the richer variants.  Variant V regresses from the first-guess wind alone,
which is useful as a "can the net fix the physics-based retrieval" probe.
"""

from dataclasses import dataclass

LABEL_CHANNEL = "wspd_model"


@dataclass(frozen=True)
class VariantSpec:
    name: str
    channels: tuple

    @property
    def in_channels(self):
        return len(self.channels)


VARIANTS = {
    "I": VariantSpec("I", ("sigma0_vv",)),
    "II": VariantSpec("II", ("sigma0_vv", "incidence", "wdir_prior")),
    "III": VariantSpec("III", ("sigma0_vv", "sigma0_vh", "incidence",
                               "wdir_prior")),
    "IV": VariantSpec("IV", ("sigma0_vv", "sigma0_vh", "incidence",
                             "wdir_prior", "wspd_gmf")),
    "V": VariantSpec("V", ("wspd_gmf",)),
}


def get_variant(name: str) -> VariantSpec:
    try:
        return VARIANTS[name]
    except KeyError:
        raise ValueError(f"unknown variant {name!r}; choose from "
                         f"{sorted(VARIANTS)}") from None

"""Speaker identification with second-order circular and suprasegmental HMMs."""

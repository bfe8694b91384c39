//! Identifier newtypes shared by every layer of the simulator.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(
    /// A full blockchain node that mines and gossips.
    MinerId,
    "m"
);
id_type!(
    /// A federated-learning device.
    ClientId,
    "c"
);
id_type!(
    /// Index into the global block arena; the genesis block is `BlockId(0)`.
    BlockId,
    "b"
);
id_type!(TxId, "tx");
id_type!(
    /// Handle to a stored local model update.
    UpdateRef,
    "u"
);

impl BlockId {
    pub const GENESIS: BlockId = BlockId(0);
}

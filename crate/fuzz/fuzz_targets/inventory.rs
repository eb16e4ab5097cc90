#![no_main]

use layerscope::inventory::{parse_contrasts, PhoneInventory};
use libfuzzer_sys::fuzz_target;

// First line of the input is split off as the contrast list.
fuzz_target!(|text: &str| {
    let (contrasts, inventory) = text.split_once('\n').unwrap_or(("", text));
    let Ok(inv) = PhoneInventory::parse(inventory, "fuzz") else {
        return;
    };
    if let Ok(cs) = parse_contrasts(&contrasts.replace(';', "\n"), "fuzz", &inv) {
        for c in cs {
            assert!(c.left < c.right);
            assert!(inv.contains(&c.left) && inv.contains(&c.right));
        }
    }
});

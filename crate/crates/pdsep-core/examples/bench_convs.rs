//! Per-kernel timings at the desk-scale generator geometries.

use pdsep_core::bench_internal::{time_conv1d, ConvCase};

fn main() {
    // (c_in, t_in, c_out, k, stride): the desk 1-D generator + critic layers.
    let cases = [
        ("down1", ConvCase { c_in: 1, t_in: 256, c_out: 16, k: 3, stride: 2 }),
        ("down2", ConvCase { c_in: 16, t_in: 128, c_out: 32, k: 3, stride: 2 }),
        ("down3", ConvCase { c_in: 32, t_in: 64, c_out: 64, k: 3, stride: 2 }),
        ("down4", ConvCase { c_in: 64, t_in: 32, c_out: 128, k: 3, stride: 2 }),
        ("up1", ConvCase { c_in: 128, t_in: 32, c_out: 64, k: 3, stride: 1 }),
        ("up2", ConvCase { c_in: 64, t_in: 64, c_out: 32, k: 3, stride: 1 }),
        ("up3", ConvCase { c_in: 32, t_in: 128, c_out: 16, k: 3, stride: 1 }),
        ("up4", ConvCase { c_in: 16, t_in: 256, c_out: 16, k: 3, stride: 1 }),
        ("head", ConvCase { c_in: 16, t_in: 256, c_out: 1, k: 3, stride: 1 }),
    ];
    let mut totals = (0.0f64, 0.0f64, 0.0f64);
    eprintln!("layer   macs(K)   fwd(us)  dx(us)  dw(us)   fwd GMAC/s");
    for (name, case) in cases {
        let r = time_conv1d(&case, 300);
        totals.0 += r.fwd_us;
        totals.1 += r.dx_us;
        totals.2 += r.dw_us;
        eprintln!(
            "{name:6} {:8.1} {:9.2} {:7.2} {:7.2} {:10.2}",
            r.macs as f64 / 1e3,
            r.fwd_us,
            r.dx_us,
            r.dw_us,
            r.macs as f64 / r.fwd_us / 1e3,
        );
    }
    eprintln!(
        "total fwd {:.1}us dx {:.1}us dw {:.1}us",
        totals.0, totals.1, totals.2
    );
}

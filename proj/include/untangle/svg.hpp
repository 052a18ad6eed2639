#pragma once

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

namespace untangle {

// Minimal static-SVG writer for the study plots. No interactivity, fixed
// viewBox, numbers printed with enough precision to round-trip.
class SvgCanvas {
public:
    SvgCanvas(double width, double height);

    void rect(double x, double y, double w, double h, const std::string& fill,
              const std::string& stroke = "");
    void line(double x1, double y1, double x2, double y2, const std::string& stroke,
              double width = 1.0);
    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke,
                  double width = 1.5);
    void circle(double cx, double cy, double r, const std::string& fill);
    void text(double x, double y, const std::string& s, double size = 10.0,
              const std::string& anchor = "start");

    std::string str() const;
    void save(const std::filesystem::path& path) const;

private:
    double width_, height_;
    std::ostringstream body_;
};

// Sequential grayscale-to-blue color for heatmap cells, t in [0,1].
std::string heat_color(double t);

}  // namespace untangle
